"""Triangle meshes: extrusion, convex hulls, validity checks, mass properties
and binary STL I/O.

All lengths are millimetres. Meshes are plain vertex/index arrays and are
treated as immutable once built.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull

DEFAULT_DENSITY = 1.15e-6  # kg/mm^3, printed PLA
STL_HEADER = b"handforge binary STL".ljust(80, b"\0")


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray  # (n, 3) float64, mm
    triangles: np.ndarray  # (m, 3) int64

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def transformed(self, T: np.ndarray) -> "TriMesh":
        """Apply a 4x4 rigid (or scaling) transform."""
        v = self.vertices @ T[:3, :3].T + T[:3, 3]
        tri = self.triangles
        if np.linalg.det(T[:3, :3]) < 0:
            tri = tri[:, ::-1]
        return TriMesh(v, tri)

    def scaled(self, s) -> "TriMesh":
        T = np.eye(4)
        T[:3, :3] = np.diag(np.broadcast_to(np.asarray(s, float), (3,)))
        return self.transformed(T)

    def triangle_normals(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        n = np.cross(b - a, c - a)
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def signed_volume(self) -> float:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    def bounds(self) -> np.ndarray:
        return np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    def to_bytes(self) -> bytes:
        return stl_bytes(self)


# ---------------------------------------------------------------- polygons


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross2(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _in_triangle(p, a, b, c, eps=1e-12) -> bool:
    return (
        _cross2(a, b, p) >= -eps and _cross2(b, c, p) >= -eps and _cross2(c, a, p) >= -eps
    )


def ear_clip(poly: np.ndarray) -> np.ndarray:
    """Triangulate a simple CCW polygon; returns (n-2, 3) index triples."""
    poly = np.asarray(poly, dtype=np.float64)
    n = len(poly)
    if n < 3:
        raise MeshError("polygon needs at least 3 vertices")
    if polygon_area(poly) <= 0:
        raise MeshError("polygon must be counter-clockwise with positive area")
    idx = list(range(n))
    tris = []
    guard = 0
    while len(idx) > 3:
        m = len(idx)
        clipped = False
        for k in range(m):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % m]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if _cross2(a, b, c) <= 1e-12:
                continue
            others = (poly[j] for j in idx if j not in (i0, i1, i2))
            if any(_in_triangle(p, a, b, c) for p in others):
                continue
            tris.append((i0, i1, i2))
            del idx[k]
            clipped = True
            break
        if not clipped:
            # only collinear ears left; drop a zero-area vertex if there is one
            for k in range(m):
                a, b, c = poly[idx[k - 1]], poly[idx[k]], poly[idx[(k + 1) % m]]
                if abs(_cross2(a, b, c)) <= 1e-12:
                    del idx[k]
                    break
            else:
                raise MeshError("ear clipping failed (self-intersecting polygon?)")
        guard += 1
        if guard > 4 * n:
            raise MeshError("ear clipping did not terminate")
    tris.append(tuple(idx))
    return np.array(tris, dtype=np.int64)


def extrude_polygon(poly: np.ndarray, height: float, z0: float = 0.0) -> TriMesh:
    """Closed prism over a simple CCW polygon, outward oriented."""
    poly = np.asarray(poly, dtype=np.float64)
    if height <= 0:
        raise MeshError("extrusion height must be positive")
    n = len(poly)
    caps = ear_clip(poly)
    bottom = np.column_stack([poly, np.full(n, z0)])
    top = np.column_stack([poly, np.full(n, z0 + height)])
    verts = np.vstack([bottom, top])
    tris = [caps[:, ::-1], caps + n]
    i = np.arange(n)
    j = (i + 1) % n
    tris.append(np.column_stack([i, j, j + n]))
    tris.append(np.column_stack([i, j + n, i + n]))
    return TriMesh(verts, np.vstack(tris))


# ---------------------------------------------------------------- hulls


def convex_hull(points: np.ndarray) -> TriMesh:
    """Outward-oriented hull mesh of a 3-D point set (unused points dropped)."""
    pts = np.asarray(points, dtype=np.float64)
    hull = ConvexHull(pts)
    tris = hull.simplices.copy()
    a, b, c = (pts[tris[:, i]] for i in range(3))
    n = np.cross(b - a, c - a)
    flip = np.einsum("ij,ij->i", n, hull.equations[:, :3]) < 0
    tris[flip] = tris[flip][:, ::-1]
    used, inverse = np.unique(tris, return_inverse=True)
    return TriMesh(pts[used], inverse.reshape(-1, 3))


def convexity_error(m: TriMesh) -> float:
    """Largest distance (mm) of any vertex outside any face plane."""
    normals = m.triangle_normals()
    p0 = m.vertices[m.triangles[:, 0]]
    offs = np.einsum("ij,ij->i", normals, p0)
    d = m.vertices @ normals.T - offs
    return float(max(d.max(), 0.0))


def is_convex(m: TriMesh, tol: float = 1e-6) -> bool:
    return watertight_check(m) and m.signed_volume() > 0 and convexity_error(m) <= tol


# ---------------------------------------------------------------- checks


def watertight_check(m: TriMesh) -> bool:
    """Every edge used exactly twice with opposite winding, single component."""
    if m.n_triangles == 0:
        return False
    t = m.triangles
    directed = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    counts = Counter(map(tuple, directed.tolist()))
    for (a, b), c in counts.items():
        if c != 1 or counts.get((b, a), 0) != 1:
            return False
    # connectivity over the vertices that triangles use
    used = np.unique(t)
    parent = {int(v): int(v) for v in used}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b, c in t.tolist():
        ra, rb, rc = find(a), find(b), find(c)
        parent[rb] = ra
        parent[find(rc)] = ra
    return len({find(int(v)) for v in used}) == 1


# ---------------------------------------------------------------- inertia


@dataclass(frozen=True)
class MassProps:
    mass: float  # kg
    com: np.ndarray  # mm
    inertia: np.ndarray  # kg mm^2 about the COM


def mass_props(m: TriMesh, density: float = DEFAULT_DENSITY) -> MassProps:
    if not watertight_check(m):
        raise MeshError("mass properties need a watertight mesh")
    a, b, c = (m.vertices[m.triangles[:, i]] for i in range(3))
    vol6 = np.einsum("ij,ij->i", a, np.cross(b, c))
    vol = vol6 / 6.0
    V = vol.sum()
    if V <= 0:
        raise MeshError("mesh has non-positive volume (inward orientation?)")
    s = a + b + c
    com = (vol[:, None] * s).sum(axis=0) / (4.0 * V)
    # second moment of each origin-apex tetrahedron
    outer = (
        np.einsum("ni,nj->nij", a, a)
        + np.einsum("ni,nj->nij", b, b)
        + np.einsum("ni,nj->nij", c, c)
        + np.einsum("ni,nj->nij", s, s)
    )
    C = (vol[:, None, None] * outer).sum(axis=0) / 20.0
    C_com = C - V * np.outer(com, com)
    inertia = density * (np.trace(C_com) * np.eye(3) - C_com)
    inertia = 0.5 * (inertia + inertia.T)
    return MassProps(mass=float(density * V), com=com, inertia=inertia)


# ---------------------------------------------------------------- STL


def stl_bytes(m: TriMesh) -> bytes:
    v32 = m.vertices.astype(np.float32)
    tri = v32[m.triangles]  # (m, 3, 3)
    t64 = tri.astype(np.float64)
    n = np.cross(t64[:, 1] - t64[:, 0], t64[:, 2] - t64[:, 0])
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    n = np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)
    rec = np.zeros(
        len(tri),
        dtype=np.dtype([("n", "<f4", (3,)), ("v", "<f4", (3, 3)), ("attr", "<u2")]),
    )
    rec["n"] = n.astype(np.float32)
    rec["v"] = tri
    return STL_HEADER + struct.pack("<I", len(tri)) + rec.tobytes()


def write_stl(m: TriMesh, path) -> None:
    Path(path).write_bytes(stl_bytes(m))


def read_stl(path) -> TriMesh:
    data = Path(path).read_bytes()
    if len(data) < 84:
        raise MeshError(f"{path}: truncated STL header")
    (count,) = struct.unpack_from("<I", data, 80)
    if len(data) != 84 + 50 * count:
        raise MeshError(f"{path}: size {len(data)} does not match {count} facets")
    rec = np.frombuffer(
        data,
        dtype=np.dtype([("n", "<f4", (3,)), ("v", "<f4", (3, 3)), ("attr", "<u2")]),
        count=count,
        offset=84,
    )
    soup = rec["v"].reshape(-1, 3)
    verts, inverse = np.unique(soup, axis=0, return_inverse=True)
    return TriMesh(verts.astype(np.float64), inverse.reshape(-1, 3))


# ---------------------------------------------------------------- primitives


def box(size, center=(0.0, 0.0, 0.0)) -> TriMesh:
    h = 0.5 * np.asarray(size, dtype=np.float64)
    corners = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float
    )
    return convex_hull(corners * h + np.asarray(center, float))


def transform(R: np.ndarray | None = None, t=None) -> np.ndarray:
    T = np.eye(4)
    if R is not None:
        T[:3, :3] = R
    if t is not None:
        T[:3, 3] = t
    return T
