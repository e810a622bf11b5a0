"""Mixed continuous / integer / categorical search spaces with conditional
activation, plus the 28-parameter power-grasp hand space."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Mapping

import numpy as np

MISSING = float("nan")  # encoding of inactive parameters

KINDS = ("continuous", "integer", "categorical")
GROUPS = ("finger-pose", "thumb-pose", "palm-kernel", "fingertip", "link-lengths", "structural")


@dataclass(frozen=True)
class Activation:
    """`name == value` or `name in [v1, v2]`."""

    name: str
    values: tuple

    @classmethod
    def parse(cls, text: str) -> "Activation":
        text = text.strip()
        if " in " in text:
            name, rhs = text.split(" in ", 1)
            vals = json.loads(rhs)
            if not isinstance(vals, list) or not vals:
                raise ValueError(f"bad activation list: {text!r}")
            return cls(name.strip(), tuple(vals))
        if "==" in text:
            name, rhs = text.split("==", 1)
            return cls(name.strip(), (json.loads(rhs),))
        raise ValueError(f"cannot parse activation {text!r}")

    def __str__(self) -> str:
        if len(self.values) == 1:
            return f"{self.name} == {json.dumps(self.values[0])}"
        return f"{self.name} in {json.dumps(list(self.values))}"

    def holds(self, values: Mapping[str, Any]) -> bool:
        return self.name in values and values[self.name] in self.values


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    group: str
    bounds: tuple[float, float] | None = None
    choices: tuple | None = None
    unit: str = ""
    activation: Activation | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.choices:
                raise ValueError(f"{self.name}: empty choice list")
        else:
            lo, hi = self.bounds
            if not lo < hi:
                raise ValueError(f"{self.name}: degenerate bounds {self.bounds}")
            if self.kind == "integer" and (lo != int(lo) or hi != int(hi)):
                raise ValueError(f"{self.name}: integer bounds must be whole numbers")

    def contains(self, v) -> bool:
        if self.kind == "categorical":
            return v in self.choices
        if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
            return False
        if not math.isfinite(v):
            return False
        if self.kind == "integer" and v != int(v):
            return False
        lo, hi = self.bounds
        return lo <= v <= hi

    def sample(self, rng: np.random.Generator):
        if self.kind == "categorical":
            return self.choices[int(rng.integers(len(self.choices)))]
        lo, hi = self.bounds
        if self.kind == "integer":
            return int(rng.integers(int(lo), int(hi) + 1))
        return float(rng.uniform(lo, hi))

    def to_json(self) -> dict:
        d: dict[str, Any] = {"name": self.name, "kind": self.kind, "group": self.group}
        if self.kind == "categorical":
            d["choices"] = list(self.choices)
        else:
            d["bounds"] = list(self.bounds)
            d["unit"] = self.unit
        d["activation"] = str(self.activation) if self.activation else None
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "ParamSpec":
        act = d.get("activation")
        return cls(
            name=d["name"],
            kind=d["kind"],
            group=d["group"],
            bounds=tuple(d["bounds"]) if "bounds" in d else None,
            choices=tuple(d["choices"]) if "choices" in d else None,
            unit=d.get("unit", ""),
            activation=Activation.parse(act) if act else None,
        )


@dataclass(frozen=True, eq=False)
class DesignPoint:
    values: Mapping[str, Any]
    space_id: str = ""

    def __getitem__(self, k):
        return self.values[k]

    def get(self, k, default=None):
        return self.values.get(k, default)

    def __eq__(self, other):
        return (
            isinstance(other, DesignPoint)
            and self.space_id == other.space_id
            and dict(self.values) == dict(other.values)
        )

    def to_json(self) -> dict:
        return {"space": self.space_id, "values": dict(self.values)}


@dataclass(frozen=True)
class TrialRecord:
    index: int
    point: DesignPoint
    score: float
    seed: int
    wall_time: float = 0.0
    tag: str = ""
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError("trial score must be finite")


class DesignSpace:
    def __init__(self, params: list[ParamSpec], space_id: str = "space"):
        self.space_id = space_id
        self.params = list(params)
        self.by_name = {}
        for p in self.params:
            if p.name in self.by_name:
                raise ValueError(f"duplicate parameter {p.name!r}")
            if p.activation is not None:
                parent = self.by_name.get(p.activation.name)
                if parent is None:
                    raise ValueError(
                        f"{p.name}: activation references {p.activation.name!r}, "
                        "which is not declared earlier"
                    )
            self.by_name[p.name] = p
        self.groups: dict[str, list[str]] = {}
        for p in self.params:
            self.groups.setdefault(p.group, []).append(p.name)

    def __len__(self):
        return len(self.params)

    def __getitem__(self, name) -> ParamSpec:
        return self.by_name[name]

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    def active_names(self, values: Mapping[str, Any]) -> list[str]:
        """Resolve activation in declaration (topological) order."""
        out: list[str] = []
        seen: dict[str, Any] = {}
        for p in self.params:
            if p.activation is None or p.activation.holds(seen):
                out.append(p.name)
                if p.name in values:
                    seen[p.name] = values[p.name]
        return out

    def validate(self, point: DesignPoint | Mapping) -> DesignPoint:
        values = point.values if isinstance(point, DesignPoint) else point
        active = self.active_names(values)
        missing = [n for n in active if n not in values]
        if missing:
            raise ValueError(f"missing active parameters: {missing}")
        extra = sorted(set(values) - set(active))
        if extra:
            raise ValueError(f"inactive or unknown parameters present: {extra}")
        for n in active:
            if not self.by_name[n].contains(values[n]):
                raise ValueError(f"{n}={values[n]!r} outside {self._domain(n)}")
        if isinstance(point, DesignPoint):
            return point
        return DesignPoint({n: values[n] for n in active}, self.space_id)

    def _domain(self, n):
        p = self.by_name[n]
        return p.choices if p.kind == "categorical" else p.bounds

    def make_point(self, values: Mapping[str, Any]) -> DesignPoint:
        """Validate and normalise a mapping (e.g. loaded from JSON)."""
        vals = {}
        for k, v in values.items():
            p = self.by_name.get(k)
            if p is not None and p.kind == "continuous" and isinstance(v, int) and not isinstance(v, bool):
                v = float(v)
            vals[k] = v
        point = DesignPoint({n: vals[n] for n in self.names if n in vals}, self.space_id)
        if set(vals) - set(point.values):
            raise ValueError(f"unknown parameters: {sorted(set(vals) - set(self.names))}")
        return self.validate(point)

    def sample_uniform(self, seed) -> DesignPoint:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        values: dict[str, Any] = {}
        for p in self.params:
            if p.activation is None or p.activation.holds(values):
                values[p.name] = p.sample(rng)
        return DesignPoint(values, self.space_id)

    def encode(self, point: DesignPoint) -> np.ndarray:
        x = np.full(len(self.params), MISSING)
        for i, p in enumerate(self.params):
            if p.name not in point.values:
                continue
            v = point.values[p.name]
            x[i] = p.choices.index(v) if p.kind == "categorical" else float(v)
        return x

    def decode(self, x) -> DesignPoint:
        x = np.asarray(x, dtype=float)
        if x.shape != (len(self.params),):
            raise ValueError(f"expected {len(self.params)} columns, got {x.shape}")
        values: dict[str, Any] = {}
        for i, p in enumerate(self.params):
            if np.isnan(x[i]):
                continue
            v = x[i]
            if p.kind == "categorical":
                k = int(v)
                if k != v or not 0 <= k < len(p.choices):
                    raise ValueError(f"{p.name}: unknown ordinal {v}")
                values[p.name] = p.choices[k]
            else:
                if p.kind == "integer":
                    if v != int(v):
                        raise ValueError(f"{p.name}: non-integer value {v}")
                    v = int(v)
                else:
                    v = float(v)
                if not p.contains(v):
                    raise ValueError(f"{p.name}: {v} outside {p.bounds}")
                values[p.name] = v
        return self.validate(DesignPoint(values, self.space_id))

    def group_of(self, name: str) -> str:
        return self.by_name[name].group

    def to_json(self) -> dict:
        return {"id": self.space_id, "params": [p.to_json() for p in self.params]}

    @classmethod
    def from_json(cls, d: Mapping) -> "DesignSpace":
        return cls([ParamSpec.from_json(p) for p in d["params"]], d.get("id", "space"))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    @classmethod
    def load(cls, path) -> "DesignSpace":
        with open(path) as f:
            return cls.from_json(json.load(f))


def _c(name, lo, hi, group, unit="", activation=None):
    act = Activation.parse(activation) if activation else None
    return ParamSpec(name, "continuous", group, bounds=(float(lo), float(hi)), unit=unit, activation=act)


def build_power_grasp_space() -> DesignSpace:
    """The 28-parameter power-grasp hand space.

    Structural parameters come first so that the middle finger's normal
    offset can be gated on ``finger_number``.
    """
    s = "structural"
    params = [
        ParamSpec("finger_code", "categorical", s, choices=("1-1-1", "0-121")),
        ParamSpec("thumb_code", "categorical", s, choices=("1-22", "0-22")),
        ParamSpec("finger_number", "categorical", s, choices=(2, 3)),
        _c("index_angle", 0, 30, "finger-pose", "deg"),
        _c("pinky_angle", -30, 0, "finger-pose", "deg"),
        _c("index_normal_offset", 0, 5, "finger-pose", "mm"),
        _c("middle_normal_offset", 0, 10, "finger-pose", "mm", "finger_number == 3"),
        _c("pinky_normal_offset", 0, 5, "finger-pose", "mm"),
        _c("index_side_offset", 0, 30, "finger-pose", "mm"),
        _c("pinky_side_offset", -30, 0, "finger-pose", "mm"),
        _c("thumb_angle", -30, 30, "thumb-pose", "deg"),
        _c("thumb_normal_offset", -30, 30, "thumb-pose", "mm"),
        _c("thumb_side_offset", -40, 10, "thumb-pose", "mm"),
        _c("pad_max_height", 0, 20, "palm-kernel", "mm"),
    ]
    for k in (0, 1):
        params.append(_c(f"k{k}_spread", 0.05, 0.3, "palm-kernel"))
    for k in (0, 1):
        params.append(_c(f"k{k}_center_angle", 0, 360, "palm-kernel", "deg"))
    for k in (0, 1):
        params.append(_c(f"k{k}_center_offset", 0, 1, "palm-kernel"))
    for k in (0, 1):
        params.append(_c(f"k{k}_intensity", 0, 1, "palm-kernel"))
    params += [
        _c("tip_scale_y", 1.0, 1.5, "fingertip"),
        _c("tip_scale_z", 0.5, 1.5, "fingertip"),
    ]
    params += [_c(f"link{i}_added", 0, 10, "link-lengths", "mm") for i in range(4)]
    return DesignSpace(params, "power_grasp_v1")


def load_shipped_space(name: str = "power_grasp_v1") -> DesignSpace:
    text = resources.files("handforge").joinpath("data").joinpath(f"{name}.json").read_text()
    return DesignSpace.from_json(json.loads(text))
