"""Grasp configurations, perturbation sampling and quasi-static finger
closing onto a suspended tool."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..finger import GRASP, SIDE, FingerChain
from ..hand import HandModel
from .tools import ToolModel

TRANSLATION_BOUNDS = (20.0, 20.0, 10.0)  # mm
ROTATION_BOUNDS = (15.0, 15.0, 15.0)  # deg
SPREAD_RANGE = (-15.0, 15.0)  # deg

STEP_DEG = 1.0
CONTACT_TOL = 0.5  # mm
APPROACH_MAX = 40.0  # mm
APPROACH_STEP = 1.0  # mm
CHUNK = 16  # closing steps evaluated per batch
BISECT_ITERS = 12


@dataclass(frozen=True)
class PerturbBounds:
    translation: tuple[float, float, float] = TRANSLATION_BOUNDS
    rotation: tuple[float, float, float] = ROTATION_BOUNDS
    spread: dict = field(default_factory=dict)  # finger -> (lo, hi) deg

    def __post_init__(self):
        if min(self.translation) < 0 or min(self.rotation) < 0:
            raise ValueError("perturbation bounds must be non-negative")

    @classmethod
    def for_hand(cls, hand: HandModel, **kw) -> "PerturbBounds":
        return cls(spread={f: SPREAD_RANGE for f in hand.fingers}, **kw)


@dataclass(frozen=True, eq=False)
class GraspConfig:
    q0: dict  # digit -> joint angles (deg)
    T_grasp: np.ndarray  # hand pose in the tool frame
    spread: dict = field(default_factory=dict)
    perturb: tuple = (0.0,) * 6  # tx, ty, tz (mm), rx, ry, rz (deg)

    def __post_init__(self):
        R = self.T_grasp[:3, :3]
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9):
            raise ValueError("T_grasp rotation is not orthonormal")

    def to_json(self) -> dict:
        return {"perturb": list(self.perturb), "spread": dict(self.spread)}


@dataclass(frozen=True)
class Contact:
    point: np.ndarray  # object frame, mm
    normal: np.ndarray  # unit, pointing into the object
    mu: float = 0.8
    cap: float = 8.0  # N
    tangent: np.ndarray | None = None
    link: str = ""
    distance: float = 0.0

    def __post_init__(self):
        if self.mu < 0 or self.cap <= 0:
            raise ValueError("contact needs mu >= 0 and cap > 0")
        n = np.linalg.norm(self.normal)
        if abs(n - 1) > 1e-6:
            raise ValueError("contact normal must be unit length")


@dataclass(frozen=True)
class ContactSet:
    contacts: tuple[Contact, ...] = ()
    feasible: bool = True
    q: dict = field(default_factory=dict)  # final joint angles per digit
    T_final: np.ndarray | None = None

    def __len__(self):
        return len(self.contacts)

    def __iter__(self):
        return iter(self.contacts)


def rpy_matrix(rx, ry, rz) -> np.ndarray:
    """Rz @ Ry @ Rx, angles in degrees."""
    a, b, c = (math.radians(v) for v in (rx, ry, rz))
    Rx = np.array([[1, 0, 0], [0, math.cos(a), -math.sin(a)], [0, math.sin(a), math.cos(a)]])
    Ry = np.array([[math.cos(b), 0, math.sin(b)], [0, 1, 0], [-math.sin(b), 0, math.cos(b)]])
    Rz = np.array([[math.cos(c), -math.sin(c), 0], [math.sin(c), math.cos(c), 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def perturbation(tx, ty, tz, rx, ry, rz) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = rpy_matrix(rx, ry, rz)
    T[:3, 3] = (tx, ty, tz)
    return T


def preshape(hand: HandModel, spread: dict) -> dict:
    """Open preshape: spread on each finger's first Side joint, zeros elsewhere."""
    q0 = {}
    for digit, chain in hand.chains.items():
        q = np.zeros(len(chain.joints))
        s = spread.get(digit, 0.0)
        for i, j in enumerate(chain.joints):
            if j.spec.jtype == SIDE and digit != "thumb":
                lo, hi = j.spec.limits
                q[i] = min(max(s, lo), hi)
                break
        q0[digit] = q
    return q0


def make_grasp(hand: HandModel, tool: ToolModel, perturb, spread: dict) -> GraspConfig:
    T = tool.wrist_pose @ perturbation(*perturb)
    return GraspConfig(preshape(hand, spread), T, dict(spread), tuple(float(v) for v in perturb))


def sample_grasp(tool: ToolModel, bounds: PerturbBounds, seed, hand: HandModel | None = None) -> GraspConfig:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lim = np.array(list(bounds.translation) + list(bounds.rotation), float)
    perturb = rng.uniform(-1.0, 1.0, 6) * lim
    spread = {f: float(rng.uniform(lo, hi)) for f, (lo, hi) in sorted(bounds.spread.items())}
    if hand is None:
        T = tool.wrist_pose @ perturbation(*perturb)
        return GraspConfig({}, T, spread, tuple(float(v) for v in perturb))
    return make_grasp(hand, tool, perturb, spread)


# ---------------------------------------------------------------- closing


def closing_joints(chain: FingerChain) -> list[int]:
    """Grasp joints for fingers; the thumb flexes with its non-leading Side joints."""
    if chain.structure.is_thumb:
        return [i for i, j in enumerate(chain.joints) if j.spec.jtype == SIDE and i > 0]
    return [i for i, j in enumerate(chain.joints) if j.spec.jtype == GRASP]


def _to_tool(T: np.ndarray, pts: np.ndarray) -> np.ndarray:
    return pts @ T[:3, :3].T + T[:3, 3]


class _Closer:
    def __init__(self, hand: HandModel, tool: ToolModel, tol: float):
        self.hand = hand
        self.tool = tool
        self.tol = tol
        self.palm_pts = hand.pad.surface_points()
        self.spheres = {}
        for chain in hand.chains.values():
            for link in chain.links:
                c = link.samples.mean(axis=0)
                self.spheres[link.name] = (c, float(np.linalg.norm(link.samples - c, axis=1).max()))

    def link_dist(self, T_tool, chain: FingerChain, Q: np.ndarray, links) -> np.ndarray:
        """(K, len(links)) minimum SDF for each requested link at each config.

        Exact wherever it is within tolerance; elsewhere it may be a lower
        bound (the SDF is 1-Lipschitz, so sdf(centre) - radius bounds every
        sample), which is all the touch tests need.
        """
        Ts = chain.batched_transforms(Q)  # (K, n, 4, 4)
        out = np.empty((len(Q), len(links)))
        for c, i in enumerate(links):
            link = chain.links[i]
            M = T_tool @ Ts[:, i]  # (K, 4, 4)
            centre, radius = self.spheres[link.name]
            lb = self.tool.sdf(M[:, :3, :3] @ centre + M[:, :3, 3]) - radius
            out[:, c] = lb
            near = lb <= self.tol
            if near.any():
                Mn = M[near]
                P = np.einsum("kij,sj->ksi", Mn[:, :3, :3], link.samples) + Mn[:, None, :3, 3]
                out[near, c] = self.tool.sdf(P).min(axis=1)
        return out

    def scene_min(self, T_tool, q0: dict) -> float:
        d = self.tool.sdf(_to_tool(T_tool, self.palm_pts)).min() if len(self.palm_pts) else np.inf
        for digit, chain in self.hand.chains.items():
            dl = self.link_dist(T_tool, chain, q0[digit][None], range(len(chain.links)))
            d = min(d, dl.min())
        return float(d)

    def approach(self, T: np.ndarray, q0: dict) -> np.ndarray | None:
        """Move the hand along its palm normal until first touch.

        Returns None when the hand already penetrates the tool.
        """
        d0 = self.scene_min(T, q0)
        if d0 < 0:
            return None
        if d0 <= self.tol:
            return T

        def moved(s):
            Ts = T.copy()
            Ts[:3, 3] = T[:3, 3] + s * T[:3, 2]
            return Ts

        prev = 0.0
        for s in np.arange(APPROACH_STEP, APPROACH_MAX + 1e-9, APPROACH_STEP):
            if self.scene_min(moved(s), q0) <= self.tol:
                lo, hi = prev, s
                for _ in range(BISECT_ITERS):
                    mid = 0.5 * (lo + hi)
                    if self.scene_min(moved(mid), q0) <= self.tol:
                        hi = mid
                    else:
                        lo = mid
                return moved(hi)
            prev = s
        return T

    def close_chain(self, T_tool, chain: FingerChain, q0: np.ndarray) -> np.ndarray:
        n = len(chain.joints)
        hi_lim = np.array([j.spec.limits[1] for j in chain.joints])
        q = q0.copy()
        moving = [i for i in closing_joints(chain) if q[i] < hi_lim[i]]
        start = self.link_dist(T_tool, chain, q[None], range(n))[0]
        touched = [i for i in range(n) if start[i] <= self.tol]
        if touched:
            moving = [j for j in moving if j > max(touched)]
        while moving:
            first = min(moving)
            links = list(range(first, n))
            mask = np.zeros(n)
            mask[moving] = 1.0
            remaining = (hi_lim - q) * mask
            n_steps = int(math.ceil(remaining.max() / STEP_DEG - 1e-9))
            hit = None
            for k0 in range(0, n_steps, CHUNK):
                ks = np.arange(k0 + 1, min(k0 + CHUNK, n_steps) + 1)
                Q = q + np.minimum(ks[:, None] * STEP_DEG * mask, remaining)
                d = self.link_dist(T_tool, chain, Q, links)
                touch = (d <= self.tol).any(axis=1)
                if touch.any():
                    k = int(ks[np.argmax(touch)])
                    hit = k
                    break
            if hit is None:
                q = q + remaining
                break

            def at(t):
                return q + np.minimum(t * STEP_DEG * mask, remaining)

            lo, hi = hit - 1.0, float(hit)
            for _ in range(BISECT_ITERS):
                mid = 0.5 * (lo + hi)
                if (self.link_dist(T_tool, chain, at(mid)[None], links)[0] <= self.tol).any():
                    hi = mid
                else:
                    lo = mid
            q = at(hi)
            d = self.link_dist(T_tool, chain, q[None], links)[0]
            last = max(links[c] for c in range(len(links)) if d[c] <= self.tol)
            moving = [j for j in moving if j > last and q[j] < hi_lim[j] - 1e-12]
        return q

    def contact_at(self, pts_tool: np.ndarray, link: str, mu: float, cap: float) -> Contact | None:
        d = self.tool.sdf(pts_tool)
        i = int(np.argmin(d))
        if d[i] > self.tol:
            return None
        p = pts_tool[i]
        n_out = self.tool.normals(p[None])[0]
        point = p - d[i] * n_out
        normal = -n_out
        return Contact(point, normal, mu, cap, default_tangent(normal), link, float(d[i]))


def default_tangent(n: np.ndarray) -> np.ndarray:
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t = np.cross(n, a)
    return t / np.linalg.norm(t)


def close_fingers(
    hand: HandModel,
    tool: ToolModel,
    g: GraspConfig,
    mu: float = 0.8,
    cap: float = 8.0,
    tol: float = CONTACT_TOL,
    approach: bool = True,
) -> ContactSet:
    """Close all digits onto the tool and return one contact per touching link."""
    closer = _Closer(hand, tool, tol)
    q0 = {d: np.asarray(g.q0.get(d, np.zeros(len(c.joints))), float) for d, c in hand.chains.items()}
    T = closer.approach(g.T_grasp, q0) if approach else g.T_grasp
    if T is None or (not approach and closer.scene_min(T, q0) < 0):
        return ContactSet((), False, q0, g.T_grasp)
    qf = {d: closer.close_chain(T, c, q0[d]) for d, c in hand.chains.items()}
    contacts = []
    if len(closer.palm_pts):
        c = closer.contact_at(_to_tool(T, closer.palm_pts), "palm", mu, cap)
        if c is not None:
            contacts.append(c)
    for digit, chain in hand.chains.items():
        for link, Tl in zip(chain.links, chain.link_transforms(qf[digit])):
            c = closer.contact_at(_to_tool(T @ Tl, link.samples), link.name, mu, cap)
            if c is not None:
                contacts.append(c)
    return ContactSet(tuple(contacts), True, qf, T)
