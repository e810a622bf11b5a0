"""Grasp optimization per hand-tool pair and the hand-level evaluator."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..hand import HandModel
from ..space import DesignPoint, DesignSpace, ParamSpec
from ..tpe import TpeConfig, optimize
from .closing import (
    PerturbBounds,
    ROTATION_BOUNDS,
    SPREAD_RANGE,
    TRANSLATION_BOUNDS,
    GraspConfig,
    close_fingers,
    make_grasp,
)
from .tools import ToolModel
from .wrench import StabilityScore, WrenchTestSpec, grasp_score, hand_score

PERTURB_NAMES = ("tx", "ty", "tz", "rx", "ry", "rz")


@dataclass(frozen=True)
class EvalConfig:
    wrench: WrenchTestSpec = WrenchTestSpec()
    mu: float = 0.8
    F_cap: float = 8.0  # N per contact
    K: int = 3
    grasp_budget: int = 60
    translation: tuple = TRANSLATION_BOUNDS
    rotation: tuple = ROTATION_BOUNDS
    spread: tuple = SPREAD_RANGE
    tpe: TpeConfig = field(default_factory=TpeConfig)

    def __post_init__(self):
        if self.K < 1 or self.grasp_budget < 1:
            raise ValueError("K and grasp_budget must be at least 1")
        if self.mu < 0 or self.F_cap <= 0:
            raise ValueError("mu must be >= 0 and F_cap > 0")

    def bounds(self, hand: HandModel) -> PerturbBounds:
        return PerturbBounds(
            tuple(self.translation), tuple(self.rotation), {f: tuple(self.spread) for f in hand.fingers}
        )

    def to_json(self) -> dict:
        w = self.wrench
        return {
            "wrench": {k: getattr(w, k) for k in w.__dataclass_fields__},
            "mu": self.mu,
            "F_cap": self.F_cap,
            "K": self.K,
            "grasp_budget": self.grasp_budget,
            "translation": list(self.translation),
            "rotation": list(self.rotation),
            "spread": list(self.spread),
            "tpe": {k: getattr(self.tpe, k) for k in self.tpe.__dataclass_fields__},
        }

    @classmethod
    def from_json(cls, d: dict) -> "EvalConfig":
        d = dict(d)
        wrench = WrenchTestSpec(**d.pop("wrench", {}))
        tpe = TpeConfig(**d.pop("tpe", {}))
        for k in ("translation", "rotation", "spread"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(wrench=wrench, tpe=tpe, **d)


def grasp_space(bounds: PerturbBounds) -> DesignSpace:
    """Six perturbation dimensions plus one spread angle per finger."""
    params = []
    for name, b in zip(PERTURB_NAMES, tuple(bounds.translation) + tuple(bounds.rotation)):
        # a zero bound pins the dimension; keep a tiny range so the spec stays valid
        lo, hi = (-b, b) if b > 0 else (-1e-12, 1e-12)
        params.append(ParamSpec(name, "continuous", "perturbation", bounds=(lo, hi)))
    for f, (lo, hi) in sorted(bounds.spread.items()):
        params.append(ParamSpec(f"spread_{f}", "continuous", "spread", bounds=(float(lo), float(hi))))
    return DesignSpace(params, "grasp")


def grasp_from_point(hand: HandModel, tool: ToolModel, point: DesignPoint) -> GraspConfig:
    v = point.values
    perturb = tuple(v[n] for n in PERTURB_NAMES)
    spread = {k[len("spread_") :]: x for k, x in v.items() if k.startswith("spread_")}
    return make_grasp(hand, tool, perturb, spread)


def evaluate_grasp(hand: HandModel, tool: ToolModel, g: GraspConfig, cfg: EvalConfig = EvalConfig()) -> StabilityScore:
    contacts = close_fingers(hand, tool, g, mu=cfg.mu, cap=cfg.F_cap)
    spec = cfg.wrench
    if spec.gravity:
        spec = replace(spec, object_mass=tool.mass)
    return grasp_score(contacts, spec)


@dataclass
class GraspResult:
    tool: str
    best: GraspConfig
    score: float
    scores: list  # every evaluated grasp score, in trial order
    history: list


def optimize_grasp(
    hand: HandModel, tool: ToolModel, budget: int, seed: int, cfg: EvalConfig = EvalConfig(), uniform_only=False
) -> GraspResult:
    if budget < 1:
        raise ValueError("budget must be at least 1")
    space = grasp_space(cfg.bounds(hand))

    def objective(point):
        return evaluate_grasp(hand, tool, grasp_from_point(hand, tool, point), cfg).S_t

    best, history = optimize(objective, space, budget, cfg.tpe, seed=seed, uniform_only=uniform_only)
    return GraspResult(
        tool.name, grasp_from_point(hand, tool, best.point), best.score, [t.score for t in history], history
    )


def tool_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, 7919, k]).generate_state(1)[0])


def evaluate_hand(hand: HandModel, tools, seed: int, cfg: EvalConfig = EvalConfig()) -> tuple[float, dict]:
    """S_h over the tool set plus per-tool details for the journal."""
    per_tool, details = {}, {}
    K = min(cfg.K, cfg.grasp_budget)
    for k, tool in enumerate(tools):
        res = optimize_grasp(hand, tool, cfg.grasp_budget, tool_seed(seed, k), cfg)
        per_tool[tool.name] = res.scores
        details[tool.name] = {
            "best": res.score,
            "top_k": sorted(res.scores, reverse=True)[:K],
            "best_grasp": res.best.to_json(),
        }
    return hand_score(per_tool, K), details
