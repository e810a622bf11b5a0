"""Journal-to-dataset conversion, grouped SHAP importance and CSV outputs."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..space import DesignSpace
from .forest import ForestConfig, RegressionForest, fit_forest
from .treeshap import ShapExplanation, shap_values

MIN_TRIALS = 30
SHAP_TOL = 1e-9

IMPORTANCE_HEADER = ("kind", "name", "group", "importance", "correlation", "rank", "inactive_fraction")


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    columns: tuple
    groups: tuple
    trials: tuple = field(default=())

    def __post_init__(self):
        if len(self.X) != len(self.y):
            raise ValueError("X and y row counts differ")
        if self.X.ndim != 2 or self.X.shape[1] != len(self.columns) or len(self.groups) != len(self.columns):
            raise ValueError("column metadata does not match X")

    @classmethod
    def from_history(cls, history, space: DesignSpace) -> "Dataset":
        X = np.array([space.encode(t.point) for t in history], float).reshape(-1, len(space))
        y = np.array([t.score for t in history], float)
        return cls(X, y, tuple(space.names), tuple(p.group for p in space.params), tuple(t.index for t in history))


@dataclass
class AnalysisResult:
    forest: RegressionForest
    explanations: list
    groups: list  # (group, importance) sorted descending
    features: list  # dicts per feature, sorted descending


def _corr(a: np.ndarray, b: np.ndarray) -> float:
    m = ~np.isnan(a) & ~np.isnan(b)
    if m.sum() < 2:
        return 0.0
    a, b = a[m], b[m]
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return 0.0
    return float(((a - a.mean()) * (b - b.mean())).mean() / (sa * sb))


def group_importance(explanations, columns, groups, X=None, known_groups=None):
    """Group table (mean over samples of summed |phi|) and per-feature table."""
    if known_groups is not None:
        unknown = sorted(set(groups) - set(known_groups))
        if unknown:
            raise ValueError(f"unknown group tag(s): {unknown}")
    phi = np.array([e.phi for e in explanations], float).reshape(-1, len(columns))
    absphi = np.abs(phi)
    order = list(dict.fromkeys(known_groups or groups))
    gimp = []
    for g in order:
        cols = [j for j, gg in enumerate(groups) if gg == g]
        gimp.append((g, float(absphi[:, cols].sum(axis=1).mean()) if cols and len(phi) else 0.0))
    # stable sort keeps declaration order among ties
    gimp.sort(key=lambda r: -r[1])
    feats = []
    for j, name in enumerate(columns):
        x = X[:, j] if X is not None else np.full(len(phi), np.nan)
        feats.append(
            {
                "name": name,
                "group": groups[j],
                "importance": float(absphi[:, j].mean()) if len(phi) else 0.0,
                "correlation": _corr(x, phi[:, j]) if len(phi) else 0.0,
                "inactive_fraction": float(np.isnan(x).mean()) if len(x) else 0.0,
            }
        )
    feats.sort(key=lambda r: -r["importance"])
    return gimp, feats


def analyze(data: Dataset, config: ForestConfig = ForestConfig(), seed: int = 0, known_groups=None) -> AnalysisResult:
    if len(data.y) < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials for analysis, got {len(data.y)}")
    forest = fit_forest(data.X, data.y, config, seed)
    expl = shap_values(forest, data.X)
    bad = [i for i, e in enumerate(expl) if abs(e.residual) > SHAP_TOL]
    if bad:
        raise AssertionError(f"local accuracy violated on rows {bad[:5]}")
    groups, feats = group_importance(expl, data.columns, data.groups, data.X, known_groups)
    return AnalysisResult(forest, expl, groups, feats)


def _fmt(v) -> str:
    return repr(float(v))


def write_shap_csv(path, data: Dataset, explanations: list[ShapExplanation]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["trial", *[f"phi_{c}" for c in data.columns], "base_value", "prediction"])
        for t, e in zip(data.trials, explanations):
            w.writerow([t, *[_fmt(v) for v in e.phi], _fmt(e.base_value), _fmt(e.prediction)])


def write_shap_long_csv(path, data: Dataset, explanations: list[ShapExplanation]) -> None:
    """Plot-ready rows: trial, feature, group, value (blank when inactive), phi."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["trial", "name", "group", "value", "phi", "active"])
        for r, (t, e) in enumerate(zip(data.trials, explanations)):
            for j, c in enumerate(data.columns):
                v = data.X[r, j]
                active = not np.isnan(v)
                w.writerow([t, c, data.groups[j], _fmt(v) if active else "", _fmt(e.phi[j]), int(active)])


def write_importance_csv(path, result: AnalysisResult) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(IMPORTANCE_HEADER)
        for rank, (g, imp) in enumerate(result.groups, 1):
            w.writerow(["group", g, g, _fmt(imp), "", rank, ""])
        for rank, r in enumerate(result.features, 1):
            w.writerow(
                ["feature", r["name"], r["group"], _fmt(r["importance"]), _fmt(r["correlation"]), rank, _fmt(r["inactive_fraction"])]
            )
