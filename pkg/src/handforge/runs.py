"""Run configuration, the hand-level objective and run-directory bookkeeping."""

from __future__ import annotations

import copy
import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grasp.search import EvalConfig, evaluate_hand
from .grasp.tools import ToolModel, load_tools
from .hand import assemble_hand, export
from .palm import InfeasibleDesign
from .space import DesignPoint, DesignSpace, load_shipped_space
from .surface import DEFAULT_RESOLUTION
from .tpe import TpeConfig, best_so_far


class ConfigError(ValueError):
    """Bad or conflicting configuration (CLI exit code 2)."""


DEFAULT_CONFIG = {
    "space": "power_grasp_v1",
    "tools": ["hammer", "spoon", "knife"],
    "seed": 0,
    "hand_budget": 200,
    "batch": 4,
    "resolution": DEFAULT_RESOLUTION,
    "top_n": 5,
    "hand_tpe": {"gamma": 0.25, "n_startup": 20, "n_candidates": 24, "bandwidth_rule": "range", "prior_weight": 1.0},
    "eval": EvalConfig().to_json(),
}


def parse_override(text: str) -> tuple[list[str], object]:
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_override(cfg: dict, path: list[str], value) -> None:
    node = cfg
    for k in path[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigError(f"unknown config section {'.'.join(path[:-1])!r}")
        node = node[k]
    if path[-1] not in node:
        raise ConfigError(f"unknown config key {'.'.join(path)!r}")
    node[path[-1]] = value


def merge(base: dict, extra: dict, prefix="") -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if k not in out:
            raise ConfigError(f"unknown config key {prefix + k!r}")
        if isinstance(out[k], dict) and isinstance(v, dict):
            out[k] = merge(out[k], v, prefix + k + ".")
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    raw: dict

    @classmethod
    def build(cls, config_file=None, overrides=(), **flags) -> "RunConfig":
        cfg = copy.deepcopy(DEFAULT_CONFIG)
        if config_file:
            try:
                with open(config_file) as f:
                    cfg = merge(cfg, json.load(f))
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigError(f"cannot read config {config_file}: {e}") from e
        for text in overrides:
            apply_override(cfg, *parse_override(text))
        for k, v in flags.items():
            if v is None:
                continue
            path = k.split(".")
            apply_override(cfg, path, v)
        rc = cls(cfg)
        rc.validate()
        return rc

    def validate(self) -> None:
        c = self.raw
        try:
            if int(c["hand_budget"]) < 1 or int(c["batch"]) < 1:
                raise ConfigError("hand_budget and batch must be at least 1")
            if int(c["resolution"]) < 4:
                raise ConfigError("resolution must be at least 4")
            self.eval_config
            self.hand_tpe
            self.tools
            self.space
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError, OSError) as e:
            raise ConfigError(str(e)) from e

    @property
    def space(self) -> DesignSpace:
        s = self.raw["space"]
        if str(s).endswith(".json"):
            if not Path(s).exists():
                raise ConfigError(f"space file {s} does not exist")
            return DesignSpace.load(s)
        return load_shipped_space(s)

    @property
    def tools(self) -> list[ToolModel]:
        t = self.raw["tools"]
        return load_tools(t if isinstance(t, str) else list(t))

    @property
    def eval_config(self) -> EvalConfig:
        return EvalConfig.from_json(self.raw["eval"])

    @property
    def hand_tpe(self) -> TpeConfig:
        return TpeConfig(batch=int(self.raw["batch"]), **self.raw["hand_tpe"])

    def dumps(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True) + "\n"


class HandObjective:
    """Design point -> (S_h, journal extras); picklable for process pools."""

    def __init__(self, tools, cfg: EvalConfig, resolution: int = DEFAULT_RESOLUTION):
        self.tools = list(tools)
        self.cfg = cfg
        self.resolution = resolution

    def __call__(self, point: DesignPoint, seed: int):
        try:
            hand = assemble_hand(point, self.resolution)
        except InfeasibleDesign as e:
            return 0.0, {"infeasible": str(e)}
        score, details = evaluate_hand(hand, self.tools, seed, self.cfg)
        return score, {"tools": details, "links": hand.n_links, "joints": hand.n_joints}


def curve_rows(history, batch: int) -> list[tuple]:
    best = best_so_far(history)
    rows = []
    for b in range(0, len(history), batch):
        chunk = history[b : b + batch]
        rows.append((b // batch + 1, float(np.mean([t.score for t in chunk])), best[b + len(chunk) - 1], b + len(chunk)))
    return rows


def write_curve(path, history, batch: int) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iteration", "batch_mean", "best_so_far", "trials"])
        for it, mean, best, n in curve_rows(history, batch):
            w.writerow([it, repr(mean), repr(best), n])


def read_curve(path) -> list[dict]:
    with open(path) as f:
        return [{k: float(v) for k, v in r.items()} for r in csv.DictReader(f)]


def top_trials(history, n: int) -> list:
    ok = [t for t in history if t.tag == "ok"]
    return sorted(ok, key=lambda t: (-t.score, t.index))[:n]


def export_designs(run_dir: Path, history, n: int, resolution: int) -> list[Path]:
    out = []
    for t in top_trials(history, n):
        hand = assemble_hand(t.point, resolution, name=f"hand_{t.index:04d}")
        out.append(export(hand, run_dir / "designs" / f"{t.index:04d}").parent)
    return out
