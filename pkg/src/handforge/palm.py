"""Palm outline, digit base placement and palm body extrusion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import MultiPolygon, Point, Polygon
from shapely.geometry.polygon import orient
from shapely.ops import unary_union

from .mesh import TriMesh, extrude_polygon, polygon_area

PALM_SIZE = 100.0
PALM_SIDES = 8
PALM_ASPECT = 1.0
PALM_THICKNESS = 18.0
BASE_WIDTH = 22.0
MIN_FEATURE = 1.0  # mm
SEAT_OVERLAP = 0.5  # mm the base seat reaches inside the outline

# nominal arc positions along the outline perimeter, measured CCW from +x
FINGER_ARCS = {"index": 1 / 6, "middle": 1 / 4, "pinky": 1 / 3}
THUMB_ARC = 0.0


class InfeasibleDesign(ValueError):
    """Raised for designs that cannot be built; the evaluator scores them 0."""


@dataclass(frozen=True)
class BasePoseParams:
    angle: float = 0.0  # deg
    normal_offset: float = 0.0  # mm
    side_offset: float = 0.0  # mm
    width: float = BASE_WIDTH

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("base width must be positive")


@dataclass(frozen=True)
class PalmParams:
    size: float = PALM_SIZE
    sides: int = PALM_SIDES
    aspect: float = PALM_ASPECT
    thickness: float = PALM_THICKNESS
    bases: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.size <= 0 or self.aspect <= 0 or self.thickness <= 0:
            raise ValueError("palm size, aspect and thickness must be positive")
        if not 3 <= self.sides <= 12:
            raise ValueError("palm sides must be in [3, 12]")


@dataclass(frozen=True, eq=False)
class BaseFrame:
    digit: str
    origin: np.ndarray  # (3,) mm
    rotation: np.ndarray  # quaternion (w, x, y, z)
    anchor: np.ndarray  # (2,) outline point the base grows from
    anchor_normal: np.ndarray  # (2,) outward normal at the anchor

    @property
    def heading(self) -> np.ndarray:
        return self.matrix[:2, 0]

    @property
    def matrix(self) -> np.ndarray:
        """4x4 palm-from-base transform."""
        return pose_matrix(self.rotation, self.origin)


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def pose_matrix(q, t) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = quat_to_matrix(q)
    T[:3, 3] = t
    return T


def yaw_quat(heading: np.ndarray) -> np.ndarray:
    psi = math.atan2(heading[1], heading[0])
    return np.array([math.cos(psi / 2), 0.0, 0.0, math.sin(psi / 2)])


def _rot2(v, deg):
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def build_outline(size: float, sides: int, aspect: float) -> np.ndarray:
    """Regular polygon inscribed in the ellipse (size/2, size/(2*aspect)), CCW."""
    if sides < 3:
        raise ValueError("outline needs at least 3 sides")
    if size <= 0 or aspect <= 0:
        raise ValueError("size and aspect must be positive")
    k = np.arange(sides)
    th = 2 * np.pi * k / sides
    return np.column_stack([0.5 * size * np.cos(th), 0.5 * size / aspect * np.sin(th)])


def _edge_normals(poly):
    d = np.roll(poly, -1, axis=0) - poly
    n = np.column_stack([d[:, 1], -d[:, 0]])
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def outline_point(poly: np.ndarray, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Point and outward normal at perimeter fraction ``s`` (from vertex 0, CCW).

    At a vertex the normal is the bisector of the two adjacent edge normals.
    """
    edges = np.roll(poly, -1, axis=0) - poly
    lengths = np.linalg.norm(edges, axis=1)
    normals = _edge_normals(poly)
    target = (s % 1.0) * lengths.sum()
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    i = int(np.searchsorted(cum, target, side="right") - 1)
    i = min(i, len(poly) - 1)
    u = (target - cum[i]) / lengths[i]
    p = poly[i] + u * edges[i]
    tol = 1e-9
    if u <= tol:
        n = normals[i] + normals[i - 1]
    elif u >= 1 - tol:
        n = normals[i] + normals[(i + 1) % len(poly)]
    else:
        n = normals[i]
    return p, n / np.linalg.norm(n)


def place_bases(
    outline: np.ndarray,
    assignments: dict,
    params: dict,
    z_top: float = PALM_THICKNESS,
) -> list[BaseFrame]:
    frames = []
    for digit, s in assignments.items():
        bp = params.get(digit, BasePoseParams())
        p, n = outline_point(outline, s)
        t = np.array([-n[1], n[0]])  # CCW tangent
        o = p + bp.normal_offset * n + bp.side_offset * t
        heading = _rot2(n, bp.angle)
        frames.append(
            BaseFrame(
                digit=digit,
                origin=np.array([o[0], o[1], z_top]),
                rotation=yaw_quat(heading),
                anchor=p,
                anchor_normal=n,
            )
        )
    return frames


def _base_quad(frame: BaseFrame, width: float) -> Polygon | None:
    n = frame.anchor_normal
    t = np.array([-n[1], n[0]])
    h = frame.heading
    lat = np.array([-h[1], h[0]])
    o = frame.origin[:2]
    back = frame.anchor - SEAT_OVERLAP * n
    pts = np.array(
        [
            back + 0.5 * width * t,
            back - 0.5 * width * t,
            o + 0.5 * width * lat,
            o - 0.5 * width * lat,
        ]
    )
    quad = shapely.convex_hull(shapely.MultiPoint(pts))
    if not isinstance(quad, Polygon) or quad.area < 1e-9:
        return None
    return quad


def _prune(coords: np.ndarray, keep_ok) -> np.ndarray:
    """Drop collinear vertices, then collapse edges shorter than MIN_FEATURE."""
    pts = [np.asarray(c) for c in coords]
    changed = True
    while changed and len(pts) > 3:
        changed = False
        for i in range(len(pts)):
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % len(pts)]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if abs(cross) <= 1e-9 * max(1.0, np.linalg.norm(c - a)):
                del pts[i]
                changed = True
                break
    changed = True
    while changed and len(pts) > 3:
        changed = False
        for i in range(len(pts)):
            a, b = pts[i], pts[(i + 1) % len(pts)]
            if np.linalg.norm(b - a) >= MIN_FEATURE:
                continue
            for drop in ((i + 1) % len(pts), i):
                trial = [p for j, p in enumerate(pts) if j != drop]
                if len(trial) >= 3 and keep_ok(np.array(trial)):
                    pts = trial
                    changed = True
                    break
            if changed:
                break
    return np.array(pts)


def finalize_outline(outline: np.ndarray, frames: list[BaseFrame], params: dict | None = None) -> np.ndarray:
    """Union the outline with one base segment per digit and clean it up."""
    params = params or {}
    shapes = [Polygon(outline)]
    for f in frames:
        width = params.get(f.digit, BasePoseParams()).width
        q = _base_quad(f, width)
        if q is not None:
            shapes.append(q)
    merged = unary_union(shapes)
    if isinstance(merged, MultiPolygon) or merged.is_empty:
        raise InfeasibleDesign("palm outline is disconnected")
    merged = orient(Polygon(merged.exterior), 1.0)
    origins = [Point(f.origin[:2]) for f in frames]

    def ok(coords):
        poly = Polygon(coords)
        if not poly.is_valid or poly.area <= 0:
            return False
        return all(poly.distance(o) <= 1e-6 for o in origins)

    coords = np.asarray(merged.exterior.coords)[:-1]
    if not ok(coords):
        raise InfeasibleDesign("base frame not contained in palm outline")
    coords = _prune(coords, ok)
    if polygon_area(coords) < 0:
        coords = coords[::-1]
    return coords


def is_simple_ccw(poly: np.ndarray) -> bool:
    p = Polygon(poly)
    return len(poly) >= 3 and p.is_valid and p.exterior.is_simple and polygon_area(poly) > 0


@dataclass(frozen=True, eq=False)
class PalmBody:
    outline: np.ndarray
    mesh: TriMesh
    thickness: float

    @property
    def top_face(self) -> np.ndarray:
        return self.outline


def extrude_palm(outline: np.ndarray, thickness: float = PALM_THICKNESS) -> PalmBody:
    return PalmBody(outline=outline, mesh=extrude_polygon(outline, thickness), thickness=thickness)
