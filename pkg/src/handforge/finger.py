"""Finger/thumb structure codes and serial kinematic chains."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .mesh import DEFAULT_DENSITY, MassProps, TriMesh, convex_hull, mass_props

GRASP, SIDE, AXIAL = "Grasp", "Side", "Axial"
DIGIT_TYPES = {"1": GRASP, "2": SIDE, "3": AXIAL}

# local axes: x along the link, y lateral, z palm normal at zero pose.
# Grasp flexes toward +z, so its axis is -y.
AXES = {GRASP: (0.0, -1.0, 0.0), SIDE: (0.0, 0.0, 1.0), AXIAL: (1.0, 0.0, 0.0)}
LIMITS = {GRASP: (0.0, 110.0), SIDE: (-30.0, 30.0), AXIAL: (-90.0, 90.0)}

MODE_TABLE = {
    0: (GRASP,),
    1: (SIDE, GRASP),
    2: (AXIAL, GRASP),
    3: (SIDE, AXIAL),
    4: (SIDE, AXIAL, GRASP),
}

BASE_PROFILE = (45.0, 32.0, 26.0)  # non-tip links, proximal to distal
TIP_LENGTH = 22.0
MAX_JOINTS = 6

LINK_WIDTH = 20.0
LINK_HEIGHT = 14.0
CORNER_RADIUS = 3.0
SAMPLE_SPACING = 4.0  # mm between contact-sample rings

_CODE_RE = re.compile(r"^(\d)((?:-\d+)*)$")


@dataclass(frozen=True)
class FingerCode:
    mode: int
    groups: tuple[str, ...]
    is_thumb: bool = False

    def __str__(self):
        return "-".join((str(self.mode),) + self.groups)


@dataclass(frozen=True)
class JointSpec:
    jtype: str
    axis: tuple[float, float, float]
    limits: tuple[float, float]  # deg
    id: str = ""


@dataclass(frozen=True)
class FingerStructure:
    joints: tuple[JointSpec, ...]
    link_lengths: tuple[float, ...]
    is_thumb: bool = False
    tip_scale: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if len(self.joints) != len(self.link_lengths):
            raise ValueError("need exactly one link per joint")
        if any(L <= 0 for L in self.link_lengths):
            raise ValueError("link lengths must be positive")
        if any(s <= 0 for s in self.tip_scale):
            raise ValueError("tip scale components must be positive")

    @property
    def types(self) -> list[str]:
        return [j.jtype for j in self.joints]


def parse_finger_code(code: str, is_thumb: bool = False) -> FingerCode:
    if not code:
        raise ValueError("empty finger code")
    m = _CODE_RE.match(code.strip())
    if not m:
        raise ValueError(f"malformed finger code {code!r}")
    mode = int(m.group(1))
    allowed = (0, 1) if is_thumb else tuple(MODE_TABLE)
    if mode not in allowed:
        raise ValueError(f"rotation mode {mode} out of range for {'thumb' if is_thumb else 'finger'}")
    groups = tuple(g for g in m.group(2).split("-") if g)
    for g in groups:
        bad = set(g) - set(DIGIT_TYPES)
        if bad:
            raise ValueError(f"joint digits must be 1, 2 or 3 (got {g!r})")
    return FingerCode(mode, groups, is_thumb)


def _joint(jtype, i):
    return JointSpec(jtype, AXES[jtype], LIMITS[jtype], f"j{i}")


def link_profile(n: int) -> list[float]:
    body = list(BASE_PROFILE[: n - 1])
    while len(body) < n - 1:
        body.append(BASE_PROFILE[-1])
    return body + [TIP_LENGTH]


def expand_structure(code: FingerCode, added_lengths=(0, 0, 0, 0), tip_scale=(1.0, 1.0, 1.0)) -> FingerStructure:
    """Expand a parsed code into joints and link lengths.

    ``added_lengths`` holds four spacer slots: slots 0-2 extend the non-tip
    links proximal to distal (slot 2 reused past the third link) and slot 3
    extends the fingertip.
    """
    if code.is_thumb:
        types = [SIDE] + ([AXIAL] if code.mode == 1 else [])
    else:
        types = list(MODE_TABLE[code.mode])
    for g in code.groups:
        types += [DIGIT_TYPES[d] for d in g]
    if len(types) > MAX_JOINTS:
        raise ValueError(f"{len(types)} joints exceeds the cap of {MAX_JOINTS}")
    added = list(added_lengths) + [0.0] * (4 - len(added_lengths))
    n = len(types)
    lengths = link_profile(n)
    for i in range(n - 1):
        lengths[i] += added[min(i, 2)]
    lengths[-1] += added[3]
    sx = 1.0 if len(tip_scale) == 2 else tip_scale[0]
    scale = (sx, tip_scale[-2], tip_scale[-1])
    return FingerStructure(
        tuple(_joint(t, i) for i, t in enumerate(types)),
        tuple(float(L) for L in lengths),
        code.is_thumb,
        tuple(float(s) for s in scale),
    )


# ---------------------------------------------------------------- geometry


def rounded_rect(width, height, radius, n_per_corner=6) -> np.ndarray:
    """CCW ring of a rounded rectangle in the (y, z) plane."""
    hw, hh = width / 2 - radius, height / 2 - radius
    pts = []
    for cy, cz, a0 in ((hw, hh, 0), (-hw, hh, 90), (-hw, -hh, 180), (hw, -hh, 270)):
        for a in np.linspace(a0, a0 + 90, n_per_corner):
            t = math.radians(a)
            pts.append((cy + radius * math.cos(t), cz + radius * math.sin(t)))
    return np.array(pts)


def _resample_ring(ring, n):
    closed = np.vstack([ring, ring[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0], np.cumsum(seg)])
    s = np.linspace(0, cum[-1], n, endpoint=False)
    return np.column_stack([np.interp(s, cum, closed[:, 0]), np.interp(s, cum, closed[:, 1])])


def _ring3(ring2, x, scale=1.0):
    return np.column_stack([np.full(len(ring2), x), scale * ring2])


def link_geometry(length: float, tip: bool = False, tip_scale=(1.0, 1.0, 1.0)):
    """Convex link body plus surface sample points, both in the link frame."""
    ring = rounded_rect(LINK_WIDTH, LINK_HEIGHT, CORNER_RADIUS)
    dense = _resample_ring(ring, 20)
    n_rings = max(2, int(math.ceil(length / SAMPLE_SPACING)) + 1)
    if not tip:
        pts = np.vstack([_ring3(ring, 0.0), _ring3(ring, length)])
        samples = np.vstack([_ring3(dense, x) for x in np.linspace(0, length, n_rings)])
        return convex_hull(pts), samples
    cap = min(0.5 * length, LINK_HEIGHT / 2)
    x0 = length - cap
    rings = [_ring3(ring, 0.0), _ring3(ring, x0)]
    srings = [_ring3(dense, x) for x in np.linspace(0, x0, max(2, n_rings - 2))]
    for phi in np.radians([20, 40, 60, 75]):
        rings.append(_ring3(ring, x0 + cap * math.sin(phi), math.cos(phi)))
        srings.append(_ring3(dense, x0 + cap * math.sin(phi), math.cos(phi)))
    apex = np.array([[length, 0.0, 0.0]])
    S = np.diag(tip_scale)
    pts = np.vstack(rings + [apex]) @ S
    samples = np.vstack(srings + [apex]) @ S
    return convex_hull(pts), samples


def axis_angle(axis, deg) -> np.ndarray:
    a = np.asarray(axis, float)
    t = math.radians(deg)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + math.sin(t) * K + (1 - math.cos(t)) * K @ K


def batched_axis_angle(axis, deg) -> np.ndarray:
    a = np.asarray(axis, float)
    t = np.radians(np.asarray(deg, float))[..., None, None]
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(t) * K + (1 - np.cos(t)) * (K @ K)


@dataclass(frozen=True, eq=False)
class ChainLink:
    name: str
    length: float
    mesh: TriMesh  # link frame
    colliders: tuple[TriMesh, ...]
    mass: MassProps
    samples: np.ndarray  # link-frame contact samples


@dataclass(frozen=True, eq=False)
class ChainJoint:
    name: str
    spec: JointSpec
    parent: str
    child: str
    origin: np.ndarray  # 4x4 parent-link frame -> joint frame at zero angle


@dataclass(frozen=True, eq=False)
class FingerChain:
    digit: str
    structure: FingerStructure
    links: tuple[ChainLink, ...]
    joints: tuple[ChainJoint, ...]

    def link_transforms(self, q=None) -> list[np.ndarray]:
        """Palm-from-link transforms at joint angles ``q`` (deg)."""
        q = np.zeros(len(self.joints)) if q is None else np.asarray(q, float)
        out = []
        T = np.eye(4)
        for j, qi in zip(self.joints, q):
            R = np.eye(4)
            R[:3, :3] = axis_angle(j.spec.axis, qi)
            T = T @ j.origin @ R
            out.append(T)
        return out

    def batched_transforms(self, Q: np.ndarray) -> np.ndarray:
        """(K, n) angles -> (K, n, 4, 4) palm-from-link transforms."""
        Q = np.asarray(Q, float)
        K, n = Q.shape
        out = np.empty((K, n, 4, 4))
        T = np.broadcast_to(np.eye(4), (K, 4, 4))
        for i, j in enumerate(self.joints):
            R = np.zeros((K, 4, 4))
            R[:, :3, :3] = batched_axis_angle(j.spec.axis, Q[:, i])
            R[:, 3, 3] = 1.0
            T = T @ j.origin @ R
            out[:, i] = T
        return out

    def tip_point(self, q=None) -> np.ndarray:
        T = self.link_transforms(q)[-1]
        return (T @ np.array([self.links[-1].length, 0, 0, 1.0]))[:3]


THUMB_ROLL = 90.0  # deg about the link axis after the thumb's lateral joint


def build_chain(structure: FingerStructure, base, density: float = DEFAULT_DENSITY) -> FingerChain:
    """Serial chain rooted at ``base`` (a BaseFrame or a 4x4 palm-from-base)."""
    base_T = base.matrix if hasattr(base, "matrix") else np.asarray(base, float)
    digit = getattr(base, "digit", "digit")
    links, joints = [], []
    n = len(structure.joints)
    parent = "palm"
    for i, (spec, L) in enumerate(zip(structure.joints, structure.link_lengths)):
        tip = i == n - 1
        mesh, samples = link_geometry(L, tip, structure.tip_scale if tip else (1.0, 1.0, 1.0))
        name = f"{digit}_link{i}"
        links.append(ChainLink(name, L, mesh, (mesh,), mass_props(mesh, density), samples))
        if i == 0:
            origin = base_T
        else:
            origin = np.eye(4)
            origin[0, 3] = structure.link_lengths[i - 1]
            if structure.is_thumb and i == 1:
                origin[:3, :3] = axis_angle((1, 0, 0), THUMB_ROLL)
        joints.append(ChainJoint(f"{digit}_{spec.id}", spec, parent, name, origin))
        parent = name
    return FingerChain(digit, structure, tuple(links), tuple(joints))
