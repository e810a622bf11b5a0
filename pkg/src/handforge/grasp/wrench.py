"""Friction-cone wrench resistance and the stability scores built on it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .closing import Contact, ContactSet, default_tangent

GRAVITY = 9.81  # m/s^2

# +Fx, -Fx, +Fy, -Fy, +Fz, -Fz, +Tx, -Tx, +Ty, -Ty, +Tz, -Tz
DIRECTIONS = np.vstack([np.eye(6)[i // 2] * (1 if i % 2 == 0 else -1) for i in range(12)])
DIRECTION_NAMES = tuple(f"{s}{a}" for a in ("Fx", "Fy", "Fz", "Tx", "Ty", "Tz") for s in "+-")


@dataclass(frozen=True)
class WrenchTestSpec:
    F_max: float = 20.0  # N
    tau_max: float = 0.6  # N m
    t_max: float = 1.0  # s
    delta_p: float = 5.0  # mm, kept for config fidelity only
    delta_theta: float = 5.0  # deg, kept for config fidelity only
    cone_edges: int = 8
    torque_scale: float = 100.0  # mm
    gravity: bool = False
    object_mass: float = 0.0  # kg, used only with gravity on

    def __post_init__(self):
        for k in ("F_max", "tau_max", "t_max", "delta_p", "delta_theta", "torque_scale"):
            if getattr(self, k) <= 0:
                raise ValueError(f"{k} must be positive")
        if self.cone_edges < 3:
            raise ValueError("cone_edges must be at least 3")

    @property
    def alpha_max(self) -> np.ndarray:
        """Per-direction saturation magnitude (torques in N after dividing by rho in m)."""
        torque = self.tau_max / (self.torque_scale * 1e-3)
        return np.array([self.F_max] * 6 + [torque] * 6)


def cone_edges(c: Contact, m: int) -> np.ndarray:
    """(m, 3) unit-normal-component edge directions of the linearized cone."""
    n = np.asarray(c.normal, float)
    t1 = c.tangent if c.tangent is not None else default_tangent(n)
    t1 = t1 - (t1 @ n) * n
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    th = 2 * np.pi * np.arange(m) / m
    return n + c.mu * (np.cos(th)[:, None] * t1 + np.sin(th)[:, None] * t2)


def grasp_matrix(contacts, m: int, rho: float) -> tuple[np.ndarray, np.ndarray]:
    """6 x (C*m) wrench map of all cone edges, plus the per-contact cap vector."""
    cols = []
    for c in contacts:
        E = cone_edges(c, m)
        p = np.asarray(c.point, float) / rho
        cols.append(np.vstack([E.T, np.cross(p, E).T]))
    caps = np.array([c.cap for c in contacts], float)
    return np.hstack(cols), caps


def gravity_wrench(spec: WrenchTestSpec) -> np.ndarray:
    w = np.zeros(6)
    if spec.gravity:
        w[2] = -spec.object_mass * GRAVITY
    return w


def resist_magnitude(contacts, w_hat, spec: WrenchTestSpec = WrenchTestSpec()) -> float:
    """Largest alpha with sum_c [f_c; (p_c/rho) x f_c] = -alpha w_hat (+ gravity offset)."""
    contacts = list(contacts)
    if not contacts:
        return 0.0
    m = spec.cone_edges
    G, caps = grasp_matrix(contacts, m, spec.torque_scale)
    w = np.asarray(w_hat, float)
    nv = G.shape[1]
    c = np.zeros(nv + 1)
    c[-1] = -1.0
    A_eq = np.hstack([G, w[:, None]])
    b_eq = -gravity_wrench(spec)
    # every edge has unit normal component, so the normal force is the coefficient sum
    A_ub = np.zeros((len(contacts), nv + 1))
    for i in range(len(contacts)):
        A_ub[i, i * m : (i + 1) * m] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=caps, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        return 0.0
    return max(0.0, float(res.x[-1]))


@dataclass(frozen=True)
class StabilityScore:
    per_direction: tuple
    S_t: float

    @classmethod
    def from_fractions(cls, fr) -> "StabilityScore":
        fr = tuple(float(v) for v in fr)
        if len(fr) != 12:
            raise ValueError("need 12 direction values")
        return cls(fr, sum(fr) / 12)


def grasp_score(contacts, spec: WrenchTestSpec = WrenchTestSpec()) -> StabilityScore:
    if isinstance(contacts, ContactSet) and not contacts.feasible:
        return StabilityScore.from_fractions([0.0] * 12)
    contacts = list(contacts)
    if not contacts:
        return StabilityScore.from_fractions([0.0] * 12)
    amax = spec.alpha_max
    fr = [min(max(resist_magnitude(contacts, DIRECTIONS[i], spec) / amax[i], 0.0), 1.0) for i in range(12)]
    return StabilityScore.from_fractions(fr)


def hand_score(per_tool_scores: dict, K: int) -> float:
    """Mean of the K best grasp scores of every tool."""
    if K < 1:
        raise ValueError("K must be at least 1")
    if not per_tool_scores:
        raise ValueError("no tools scored")
    total = 0.0
    for tool, scores in per_tool_scores.items():
        if len(scores) < K:
            raise ValueError(f"tool {tool!r} has {len(scores)} grasps, fewer than K={K}")
        total += sum(sorted(scores, reverse=True)[:K])
    return total / (K * len(per_tool_scores))
