"""Gaussian surface kernels on the palm pad and grid-prism collider
decomposition."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon, box as shapely_box

from .mesh import TriMesh, convex_hull

PAD_BASE = 2.0  # mm, pad slab thickness under the deformed surface
DEFAULT_RESOLUTION = 16
SUPPORT_SIGMAS = 4.0


@dataclass(frozen=True)
class SurfaceKernel:
    center_angle: float  # deg
    center_offset: float  # 0 = centroid, 1 = boundary
    spread: float  # sigma as a fraction of the region size
    intensity: float


@dataclass(frozen=True)
class PadSpec:
    max_height: float = 0.0
    kernels: tuple[SurfaceKernel, ...] = ()
    resolution: int = DEFAULT_RESOLUTION

    def __post_init__(self):
        if self.max_height < 0:
            raise ValueError("max_height must be non-negative")
        if self.resolution < 4:
            raise ValueError("pad resolution must be at least 4")


@dataclass(frozen=True, eq=False)
class PadMesh:
    """Regular grid over the region's bounding box.

    Nodes outside the region carry height 0 and are not part of the surface;
    ``triangles`` only covers cells whose four corners are inside.
    """

    region: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    inside: np.ndarray  # (ny+1, nx+1) bool
    heights: np.ndarray  # (ny+1, nx+1) mm above the pad base
    z0: float = 0.0

    @property
    def vertices(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys)
        return np.column_stack([X.ravel(), Y.ravel(), self.z0 + PAD_BASE + self.heights.ravel()])

    @property
    def normals(self) -> np.ndarray:
        n = np.zeros((self.inside.size, 3))
        n[:, 2] = 1.0
        return n

    @property
    def triangles(self) -> np.ndarray:
        ny, nx = self.inside.shape[0] - 1, self.inside.shape[1] - 1
        w = nx + 1
        tris = []
        for j in range(ny):
            for i in range(nx):
                if self.inside[j : j + 2, i : i + 2].all():
                    a, b, c, d = j * w + i, j * w + i + 1, (j + 1) * w + i + 1, (j + 1) * w + i
                    tris += [(a, b, c), (a, c, d)]
        return np.array(tris, dtype=np.int64).reshape(-1, 3)

    def surface_points(self) -> np.ndarray:
        """3-D points of the inside nodes (contact samples)."""
        return self.vertices[self.inside.ravel()]


def region_centroid(region: np.ndarray) -> np.ndarray:
    c = Polygon(region).centroid
    return np.array([c.x, c.y])


def characteristic_length(region: np.ndarray) -> float:
    c = region_centroid(region)
    return float(np.linalg.norm(region - c, axis=1).max())


def kernel_center(region: np.ndarray, k: SurfaceKernel) -> np.ndarray:
    """centroid + offset * d(theta) * u(theta), d = first boundary hit."""
    c = region_centroid(region)
    if k.center_offset == 0:
        return c
    th = math.radians(k.center_angle)
    u = np.array([math.cos(th), math.sin(th)])
    far = c + u * 4 * characteristic_length(region)
    hit = Polygon(region).exterior.intersection(LineString([c, far]))
    pts = shapely.get_coordinates(hit)
    d = float(np.linalg.norm(pts - c, axis=1).min()) if len(pts) else 0.0
    return c + k.center_offset * d * u


def displacement(pad: PadSpec, region: np.ndarray, p, *, centers=None, length=None) -> np.ndarray:
    """Clamped kernel superposition at 2-D point(s) ``p`` (mm)."""
    p = np.asarray(p, float)
    flat = p.reshape(-1, 2)
    if pad.max_height == 0 or not pad.kernels:
        return np.zeros(flat.shape[0]).reshape(p.shape[:-1])
    L = characteristic_length(region) if length is None else length
    if centers is None:
        centers = [kernel_center(region, k) for k in pad.kernels]
    total = np.zeros(flat.shape[0])
    for k, c in zip(pad.kernels, centers):
        s = k.spread * L
        d2 = ((flat - c) ** 2).sum(axis=1)
        g = np.exp(-d2 / (2 * s * s))
        g[d2 > (SUPPORT_SIGMAS * s) ** 2] = 0.0
        total += k.intensity * g
    h = np.minimum(pad.max_height * total, pad.max_height)
    return h.reshape(p.shape[:-1])


def flat_pad(region: np.ndarray, resolution: int = DEFAULT_RESOLUTION, z0: float = 0.0) -> PadMesh:
    lo, hi = region.min(axis=0), region.max(axis=0)
    cell = (hi[0] - lo[0]) / resolution
    ny = max(1, int(math.ceil((hi[1] - lo[1]) / cell - 1e-9)))
    xs = np.linspace(lo[0], hi[0], resolution + 1)
    ys = lo[1] + cell * np.arange(ny + 1)
    X, Y = np.meshgrid(xs, ys)
    poly = Polygon(region)
    inside = shapely.covers(poly, shapely.points(X.ravel(), Y.ravel())).reshape(X.shape)
    return PadMesh(region, xs, ys, inside, np.zeros(X.shape), z0)


def _pinned(inside: np.ndarray, interior: np.ndarray) -> np.ndarray:
    """Inside nodes on the boundary ring (a 4-neighbour is not interior)."""
    pad = np.pad(interior, 1, constant_values=False)
    all_nb = pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:]
    return inside & ~(interior & all_nb)


def deform_pad(base: PadMesh, pad: PadSpec) -> PadMesh:
    X, Y = np.meshgrid(base.xs, base.ys)
    pts = np.stack([X, Y], axis=-1)
    h = displacement(pad, base.region, pts) + base.heights
    poly = Polygon(base.region)
    interior = shapely.contains_properly(poly, shapely.points(X.ravel(), Y.ravel())).reshape(X.shape)
    h = np.where(_pinned(base.inside, interior) | ~base.inside, 0.0, h)
    return PadMesh(base.region, base.xs, base.ys, base.inside, h, base.z0)


def build_pad(region: np.ndarray, pad: PadSpec, z0: float = 0.0) -> PadMesh:
    return deform_pad(flat_pad(region, pad.resolution, z0), pad)


def _bilinear(pm: PadMesh, i: int, j: int, pts: np.ndarray) -> np.ndarray:
    x0, x1 = pm.xs[i], pm.xs[i + 1]
    y0, y1 = pm.ys[j], pm.ys[j + 1]
    u = (pts[:, 0] - x0) / (x1 - x0)
    v = (pts[:, 1] - y0) / (y1 - y0)
    h = pm.heights
    return (
        h[j, i] * (1 - u) * (1 - v)
        + h[j, i + 1] * u * (1 - v)
        + h[j + 1, i + 1] * u * v
        + h[j + 1, i] * (1 - u) * v
    )


def _planar_top(xy: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Least-squares plane through the lifted corners, evaluated at them.

    Hulling four non-coplanar corners keeps the higher diagonal split and
    overestimates the volume; a planar top integrates to the bilinear cell
    volume on rectangles. Kept above half the pad slab so pieces never invert.
    """
    if np.ptp(h) == 0:
        return h
    A = np.column_stack([xy - xy.mean(axis=0), np.ones(len(xy))])
    coef = np.linalg.lstsq(A, h, rcond=None)[0]
    return np.maximum(A @ coef, -0.5 * PAD_BASE)


def decompose_pad(deformed: PadMesh, min_area_frac: float = 1e-4) -> list[TriMesh]:
    """One convex prism per grid cell clipped to the region."""
    poly = Polygon(deformed.region)
    cell_area = (deformed.xs[1] - deformed.xs[0]) * (deformed.ys[1] - deformed.ys[0])
    pieces = []
    nx, ny = len(deformed.xs) - 1, len(deformed.ys) - 1
    for j in range(ny):
        for i in range(nx):
            cell = shapely_box(deformed.xs[i], deformed.ys[j], deformed.xs[i + 1], deformed.ys[j + 1])
            if deformed.inside[j : j + 2, i : i + 2].all():
                foot = cell
            else:
                foot = cell.intersection(poly)
                if foot.area < min_area_frac * cell_area:
                    continue
                foot = foot.convex_hull  # cell ∩ region may be a thin multi-part sliver
            xy = np.asarray(foot.exterior.coords)[:-1]
            top = deformed.z0 + PAD_BASE + _planar_top(xy, _bilinear(deformed, i, j, xy))
            pts = np.vstack(
                [np.column_stack([xy, np.full(len(xy), deformed.z0)]), np.column_stack([xy, top])]
            )
            pieces.append(convex_hull(pts))
    return pieces


def pad_kernels_from_point(values) -> PadSpec:
    kernels = tuple(
        SurfaceKernel(
            center_angle=values[f"k{k}_center_angle"],
            center_offset=values[f"k{k}_center_offset"],
            spread=values[f"k{k}_spread"],
            intensity=values[f"k{k}_intensity"],
        )
        for k in (0, 1)
    )
    return PadSpec(max_height=values["pad_max_height"], kernels=kernels)
