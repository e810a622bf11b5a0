"""Tool models built from analytic primitives (box, cylinder, capsule)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

SHAPES = ("box", "cylinder", "capsule")

# hand-frame placement of the handle centre for the reference grip; the
# handle runs diagonally across the finger and thumb roots so that digits
# with a rigid proximal link can still hook around it
GRIP_CENTER = (27.5, 27.5)
GRIP_DIRECTION = (1.0, -1.0)
GRIP_CLEARANCE = 44.0  # mm from the palm base plane to the handle surface


@dataclass(frozen=True, eq=False)
class Primitive:
    shape: str
    pose: np.ndarray  # 4x4 tool-from-primitive
    dims: tuple  # box: (sx, sy, sz); cylinder/capsule: (radius, length) along local x

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown primitive {self.shape!r}")
        if any(d <= 0 for d in self.dims) and self.shape != "capsule":
            raise ValueError("primitive dimensions must be positive")

    def sdf_local(self, p: np.ndarray) -> np.ndarray:
        if self.shape == "box":
            q = np.abs(p) - 0.5 * np.asarray(self.dims)
            outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
            return outside + np.minimum(q.max(axis=-1), 0.0)
        r, length = self.dims
        if self.shape == "cylinder":
            radial = np.hypot(p[..., 1], p[..., 2]) - r
            axial = np.abs(p[..., 0]) - 0.5 * length
            d = np.stack([radial, axial], axis=-1)
            return np.linalg.norm(np.maximum(d, 0.0), axis=-1) + np.minimum(d.max(axis=-1), 0.0)
        x = np.clip(p[..., 0], -0.5 * length, 0.5 * length)
        return np.sqrt((p[..., 0] - x) ** 2 + p[..., 1] ** 2 + p[..., 2] ** 2) - r

    def sdf(self, p: np.ndarray) -> np.ndarray:
        R, t = self.pose[:3, :3], self.pose[:3, 3]
        return self.sdf_local((p - t) @ R)

    def to_json(self) -> dict:
        return {"shape": self.shape, "pose": self.pose.tolist(), "dims": list(self.dims)}


@numba.njit(cache=True, fastmath=False)
def _union_sdf(pts, codes, rot, trans, dims):
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        best = np.inf
        for k in range(codes.shape[0]):
            dx = pts[i, 0] - trans[k, 0]
            dy = pts[i, 1] - trans[k, 1]
            dz = pts[i, 2] - trans[k, 2]
            x = rot[k, 0, 0] * dx + rot[k, 1, 0] * dy + rot[k, 2, 0] * dz
            y = rot[k, 0, 1] * dx + rot[k, 1, 1] * dy + rot[k, 2, 1] * dz
            z = rot[k, 0, 2] * dx + rot[k, 1, 2] * dy + rot[k, 2, 2] * dz
            if codes[k] == 0:
                qx = abs(x) - 0.5 * dims[k, 0]
                qy = abs(y) - 0.5 * dims[k, 1]
                qz = abs(z) - 0.5 * dims[k, 2]
                ox, oy, oz = max(qx, 0.0), max(qy, 0.0), max(qz, 0.0)
                d = np.sqrt(ox * ox + oy * oy + oz * oz) + min(max(qx, max(qy, qz)), 0.0)
            elif codes[k] == 1:
                a = np.sqrt(y * y + z * z) - dims[k, 0]
                b = abs(x) - 0.5 * dims[k, 1]
                oa, ob = max(a, 0.0), max(b, 0.0)
                d = np.sqrt(oa * oa + ob * ob) + min(max(a, b), 0.0)
            else:
                h = 0.5 * dims[k, 1]
                cx = min(max(x, -h), h)
                d = np.sqrt((x - cx) ** 2 + y * y + z * z) - dims[k, 0]
            if d < best:
                best = d
        out[i] = best
    return out


@dataclass(frozen=True, eq=False)
class ToolModel:
    name: str
    primitives: tuple[Primitive, ...]
    mass: float  # kg
    wrist_pose: np.ndarray  # 4x4 hand (wrist) pose in the tool frame

    def __post_init__(self):
        if not self.primitives:
            raise ValueError("tool needs at least one primitive")
        if self.mass <= 0:
            raise ValueError("tool mass must be positive")
        R = self.wrist_pose[:3, :3]
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9):
            raise ValueError("wrist pose rotation is not orthonormal")
        packed = (
            np.array([SHAPES.index(p.shape) for p in self.primitives], np.int64),
            np.ascontiguousarray([p.pose[:3, :3] for p in self.primitives], dtype=float),
            np.ascontiguousarray([p.pose[:3, 3] for p in self.primitives], dtype=float),
            np.ascontiguousarray([tuple(p.dims) + (0.0,) * (3 - len(p.dims)) for p in self.primitives], dtype=float),
        )
        object.__setattr__(self, "_packed", packed)

    def sdf(self, p: np.ndarray) -> np.ndarray:
        """Signed distance of the primitive union (compiled kernel)."""
        p = np.asarray(p, float)
        flat = np.ascontiguousarray(p.reshape(-1, 3))
        return _union_sdf(flat, *self._packed).reshape(p.shape[:-1])

    def sdf_reference(self, p: np.ndarray) -> np.ndarray:
        """Same field evaluated primitive by primitive with numpy."""
        p = np.asarray(p, float)
        d = self.primitives[0].sdf(p)
        for prim in self.primitives[1:]:
            d = np.minimum(d, prim.sdf(p))
        return d

    def normals(self, p: np.ndarray, eps: float = 1e-4) -> np.ndarray:
        """Outward unit normals from central differences of the SDF."""
        p = np.asarray(p, float)
        g = np.empty_like(p)
        for i in range(3):
            e = np.zeros(3)
            e[i] = eps
            g[..., i] = self.sdf(p + e) - self.sdf(p - e)
        n = np.linalg.norm(g, axis=-1, keepdims=True)
        return g / np.where(n > 0, n, 1.0)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "mass": self.mass,
            "wrist_pose": self.wrist_pose.tolist(),
            "primitives": [p.to_json() for p in self.primitives],
        }

    @classmethod
    def from_json(cls, d) -> "ToolModel":
        prims = tuple(Primitive(p["shape"], np.array(p["pose"], float), tuple(p["dims"])) for p in d["primitives"])
        return cls(d["name"], prims, float(d["mass"]), np.array(d["wrist_pose"], float))


def _pose(t=(0.0, 0.0, 0.0)) -> np.ndarray:
    T = np.eye(4)
    T[:3, 3] = t
    return T


def reference_wrist_pose(handle_radius: float) -> np.ndarray:
    """Hand pose in the tool frame for a grip centred on the handle.

    Tool x (the handle axis) maps onto GRIP_DIRECTION in the palm plane and
    tool y points away from the palm.
    """
    u = np.array([*GRIP_DIRECTION, 0.0])
    u /= np.linalg.norm(u)
    up = np.array([0.0, 0.0, 1.0])
    R = np.column_stack([u, up, np.cross(u, up)])  # hand-from-tool rotation
    c = np.array([*GRIP_CENTER, GRIP_CLEARANCE + handle_radius])
    inv = np.eye(4)
    inv[:3, :3] = R.T
    inv[:3, 3] = -R.T @ c
    return inv


def hammer() -> ToolModel:
    r = 12.5
    prims = (
        Primitive("cylinder", _pose(), (r, 250.0)),
        Primitive("box", _pose((125.0, 0.0, 0.0)), (30.0, 90.0, 30.0)),
    )
    return ToolModel("hammer", prims, 0.55, reference_wrist_pose(r))


def spoon() -> ToolModel:
    r = 5.0
    prims = (
        Primitive("capsule", _pose(), (r, 140.0)),
        Primitive("capsule", _pose((100.0, 0.0, 0.0)), (18.0, 30.0)),
    )
    return ToolModel("spoon", prims, 0.05, reference_wrist_pose(r))


def knife() -> ToolModel:
    prims = (
        Primitive("box", _pose(), (100.0, 16.0, 22.0)),
        Primitive("box", _pose((125.0, 0.0, 0.0)), (150.0, 30.0, 2.0)),
    )
    return ToolModel("knife", prims, 0.09, reference_wrist_pose(8.0))


def builtin_tools() -> list[ToolModel]:
    return [hammer(), spoon(), knife()]


def tools_to_json(tools) -> str:
    return json.dumps({"tools": [t.to_json() for t in tools]}, indent=2) + "\n"


def load_tools(spec) -> list[ToolModel]:
    """Tool names (comma separated / list) or a JSON tool-library path."""
    if isinstance(spec, (str, Path)) and Path(spec).suffix == ".json":
        with open(spec) as f:
            return [ToolModel.from_json(d) for d in json.load(f)["tools"]]
    names = spec.split(",") if isinstance(spec, str) else list(spec)
    lib = {t.name: t for t in builtin_tools()}
    out = []
    for n in names:
        n = n.strip()
        if n not in lib:
            raise ValueError(f"unknown tool {n!r} (choose from {sorted(lib)})")
        out.append(lib[n])
    return out
