"""Tree-structured Parzen Estimator over mixed, conditional design spaces."""

from __future__ import annotations

import inspect
import json
import math
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri

from .space import DesignPoint, DesignSpace, ParamSpec, TrialRecord

BANDWIDTH_RULES = ("range", "std")


@dataclass(frozen=True)
class TpeConfig:
    gamma: float = 0.25
    n_startup: int = 20
    n_candidates: int = 24
    bandwidth_rule: str = "range"
    prior_weight: float = 1.0
    batch: int = 1

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0, 1)")
        if self.n_startup < 1 or self.n_candidates < 1 or self.batch < 1:
            raise ValueError("n_startup, n_candidates and batch must be >= 1")
        if self.prior_weight <= 0:
            raise ValueError("prior_weight must be positive")
        if self.bandwidth_rule not in BANDWIDTH_RULES:
            raise ValueError(f"unknown bandwidth rule {self.bandwidth_rule!r}")


class ResumeConflict(RuntimeError):
    """The journal on disk does not match what this configuration would produce."""


def split_trials(history, gamma: float):
    """Best ceil(gamma*n) trials (at least one) vs the rest; newer wins ties."""
    if not history:
        raise ValueError("cannot split an empty history")
    n_good = max(1, math.ceil(gamma * len(history)))
    order = sorted(history, key=lambda t: (-t.score, -t.index))
    return order[:n_good], order[n_good:]


def bandwidth(obs: np.ndarray, lo: float, hi: float, rule: str = "range") -> float:
    """Silverman-style width from the observations' spread, floored at a
    thousandth of the domain. A lone observation gets the whole domain."""
    span = hi - lo
    n = len(obs)
    if n < 2:
        scale = span
    elif rule == "std":
        scale = min(float(np.std(obs)), span)
    else:
        scale = min(float(np.ptp(obs)), span)
    return max(scale * 1.06 * n ** (-0.2), span * 1e-3)


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.log(np.exp(a - m).sum(axis=axis)) + np.squeeze(m, axis=axis)


class ParzenContinuous:
    """Truncated Gaussian mixture on [lo, hi] plus a uniform prior component."""

    def __init__(self, obs, lo: float, hi: float, prior_weight: float = 1.0, rule: str = "range"):
        self.obs = np.asarray(obs, float)
        self.lo, self.hi = float(lo), float(hi)
        n = len(self.obs)
        self.w_prior = prior_weight / (n + prior_weight)
        self.w_obs = 1.0 / (n + prior_weight)
        self.h = bandwidth(self.obs, lo, hi, rule) if n else hi - lo
        self.a = (self.lo - self.obs) / self.h
        self.b = (self.hi - self.obs) / self.h
        self.Z = ndtr(self.b) - ndtr(self.a)

    def cdf(self, x) -> np.ndarray:
        x = np.clip(np.asarray(x, float), self.lo, self.hi)
        out = self.w_prior * (x - self.lo) / (self.hi - self.lo)
        if len(self.obs):
            z = (x[..., None] - self.obs) / self.h
            out = out + self.w_obs * ((ndtr(z) - ndtr(self.a)) / self.Z).sum(axis=-1)
        return out

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        out = np.full(x.shape, math.log(self.w_prior) - math.log(self.hi - self.lo))
        if len(self.obs):
            z = (x[..., None] - self.obs) / self.h
            comp = -0.5 * z * z - 0.5 * math.log(2 * math.pi) - math.log(self.h) - np.log(self.Z)
            out = np.logaddexp(out, _logsumexp(comp, -1) + math.log(self.w_obs))
        return np.where((x >= self.lo) & (x <= self.hi), out, -np.inf)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        n = len(self.obs)
        k = rng.choice(n + 1, size=size, p=[self.w_obs] * n + [self.w_prior]) if n else np.full(size, n)
        u = rng.uniform(size=size)
        out = self.lo + u * (self.hi - self.lo)
        m = k < n
        if m.any():
            ki = k[m]
            lo_c, hi_c = ndtr(self.a[ki]), ndtr(self.b[ki])
            z = ndtri(lo_c + u[m] * (hi_c - lo_c))
            out[m] = np.clip(self.obs[ki] + self.h * z, self.lo, self.hi)
        return out


class ParzenInteger:
    """Parzen mixture over the half-open cells around each integer."""

    def __init__(self, obs, lo: int, hi: int, prior_weight: float = 1.0, rule: str = "range"):
        self.lo, self.hi = int(lo), int(hi)
        self.cont = ParzenContinuous(obs, lo - 0.5, hi + 0.5, prior_weight, rule)

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        p = self.cont.cdf(x + 0.5) - self.cont.cdf(x - 0.5)
        with np.errstate(divide="ignore"):
            return np.log(p)

    def sample(self, rng, size):
        v = np.rint(self.cont.sample(rng, size))
        return np.clip(v, self.lo, self.hi)


class ParzenCategorical:
    def __init__(self, obs, n_choices: int, prior_weight: float = 1.0):
        counts = np.bincount(np.asarray(obs, int), minlength=n_choices).astype(float)
        self.p = (counts + prior_weight) / (counts.sum() + n_choices * prior_weight)

    def logpdf(self, x) -> np.ndarray:
        return np.log(self.p[np.asarray(x, int)])

    def sample(self, rng, size):
        return rng.choice(len(self.p), size=size, p=self.p)


def _estimator(p: ParamSpec, obs, prior_weight, rule):
    if p.kind == "categorical":
        return ParzenCategorical(obs, len(p.choices), prior_weight)
    if p.kind == "integer":
        return ParzenInteger(obs, p.bounds[0], p.bounds[1], prior_weight, rule)
    return ParzenContinuous(obs, p.bounds[0], p.bounds[1], prior_weight, rule)


def _ordinal(p: ParamSpec, v) -> float:
    return float(p.choices.index(v)) if p.kind == "categorical" else float(v)


def _value(p: ParamSpec, x: float):
    if p.kind == "categorical":
        return p.choices[int(x)]
    if p.kind == "integer":
        return int(x)
    return float(x)


@dataclass
class DensityModel:
    space: DesignSpace
    estimators: dict

    def logpdf(self, point: DesignPoint) -> float:
        """Sum of per-parameter log densities over the point's active parameters."""
        return float(self.logpdf_many([point])[0])

    def logpdf_many(self, points) -> np.ndarray:
        out = np.zeros(len(points))
        for p in self.space.params:
            idx = [k for k, pt in enumerate(points) if p.name in pt.values]
            if idx:
                x = np.array([_ordinal(p, points[k].values[p.name]) for k in idx])
                out[idx] += self.estimators[p.name].logpdf(x)
        return out

    def sample(self, rng: np.random.Generator) -> DesignPoint:
        return self.sample_many(rng, 1)[0]

    def sample_many(self, rng: np.random.Generator, n: int) -> list[DesignPoint]:
        """Ancestor-first draws, so every child sees its parents' values."""
        values = [{} for _ in range(n)]
        for p in self.space.params:
            draw = self.estimators[p.name].sample(rng, n)
            for k in range(n):
                if p.activation is None or p.activation.holds(values[k]):
                    values[k][p.name] = _value(p, draw[k])
        return [DesignPoint(v, self.space.space_id) for v in values]


def fit_density(points, space: DesignSpace, prior_weight: float = 1.0, bandwidth_rule: str = "range") -> DensityModel:
    ests = {}
    for p in space.params:
        obs = [_ordinal(p, pt.values[p.name]) for pt in points if p.name in pt.values]
        ests[p.name] = _estimator(p, obs, prior_weight, bandwidth_rule)
    return DensityModel(space, ests)


@dataclass
class OptimizerState:
    space: DesignSpace
    config: TpeConfig = TpeConfig()
    seed: int = 0
    history: list = field(default_factory=list)

    @property
    def best(self) -> TrialRecord | None:
        if not self.history:
            return None
        return max(self.history, key=lambda t: (t.score, -t.index))


def trial_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def startup_point(space: DesignSpace, seed: int, index: int) -> DesignPoint:
    return space.sample_uniform(np.random.default_rng([seed, index, 0]))


def propose(state: OptimizerState, index: int | None = None) -> DesignPoint:
    cfg = state.config
    i = len(state.history) if index is None else index
    if len(state.history) < cfg.n_startup:
        return startup_point(state.space, state.seed, i)
    rng = np.random.default_rng([state.seed, i, 1])
    good, bad = split_trials(state.history, cfg.gamma)
    g = fit_density([t.point for t in good], state.space, cfg.prior_weight, cfg.bandwidth_rule)
    b = fit_density([t.point for t in bad], state.space, cfg.prior_weight, cfg.bandwidth_rule)
    cands = g.sample_many(rng, cfg.n_candidates)
    ratio = g.logpdf_many(cands) - b.logpdf_many(cands)
    return cands[int(np.argmax(ratio))]


def propose_batch(state: OptimizerState, size: int) -> list[DesignPoint]:
    """Constant-liar batch: pending proposals count as median-score trials."""
    start = len(state.history)
    lie = statistics.median(t.score for t in state.history) if state.history else 0.0
    work = OptimizerState(state.space, state.config, state.seed, list(state.history))
    out = []
    for k in range(size):
        pt = propose(work, start + k)
        out.append(pt)
        work.history.append(TrialRecord(start + k, pt, lie, 0, tag="pending"))
    return out


# ---------------------------------------------------------------- journal


def record_to_json(t: TrialRecord) -> str:
    d = {
        "index": t.index,
        "point": dict(t.point.values),
        "score": t.score,
        "seed": t.seed,
        "tag": t.tag,
        "extra": dict(t.extra),
    }
    return json.dumps(d, sort_keys=True)


def read_journal(path, space: DesignSpace) -> list[TrialRecord]:
    out = []
    path = Path(path)
    if not path.exists():
        return out
    with open(path) as f:
        for ln, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                pt = space.make_point(d["point"])
                out.append(TrialRecord(int(d["index"]), pt, float(d["score"]), int(d["seed"]), 0.0, d.get("tag", ""), d.get("extra", {})))
            except (ValueError, KeyError, json.JSONDecodeError) as e:
                raise ResumeConflict(f"{path}:{ln}: unreadable journal line ({e})") from e
    for k, t in enumerate(out):
        if t.index != k:
            raise ResumeConflict(f"{path}: trial {k} has index {t.index}")
    return out


def _takes_seed(fn) -> bool:
    try:
        sig = inspect.signature(fn)
    except (TypeError, ValueError):
        return False
    pos = [
        p
        for p in sig.parameters.values()
        if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD, p.VAR_POSITIONAL)
    ]
    return len(pos) >= 2 or any(p.kind == p.VAR_POSITIONAL for p in pos)


class _Evaluate:
    """Picklable objective wrapper returning (score, tag, extra, wall time)."""

    def __init__(self, objective, pass_seed: bool):
        self.objective = objective
        self.pass_seed = pass_seed

    def __call__(self, job):
        point, seed = job
        t0 = time.perf_counter()
        try:
            out = self.objective(point, seed) if self.pass_seed else self.objective(point)
            score, extra = (out if isinstance(out, tuple) else (out, {}))
            score = float(score)
            tag = "ok"
            if not math.isfinite(score):
                score, tag, extra = 0.0, "error", {"error": "non-finite score"}
        except Exception as e:  # infeasible designs score 0, never abort the run
            score, tag, extra = 0.0, "error", {"error": f"{type(e).__name__}: {e}"}
        return score, tag, dict(extra), time.perf_counter() - t0


def optimize(
    objective: Callable,
    space: DesignSpace,
    budget: int,
    config: TpeConfig = TpeConfig(),
    seed: int = 0,
    journal=None,
    map_fn=map,
    uniform_only: bool = False,
    on_trial=None,
):
    """Run ``budget`` evaluations; returns (best record, full history).

    ``objective(point)`` or ``objective(point, seed)`` returns a score or a
    ``(score, extra)`` pair.  With a journal path the run appends one line per
    trial and resumes from whatever is already there.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if uniform_only:
        config = replace(config, n_startup=budget + 1)
    state = OptimizerState(space, config, seed)
    done = read_journal(journal, space) if journal else []
    if len(done) > budget:
        raise ResumeConflict(f"journal holds {len(done)} trials, more than the budget {budget}")
    evaluate = _Evaluate(objective, _takes_seed(objective))
    fh = open(journal, "a") if journal else None
    timing = open(Path(journal).with_suffix(".timing.jsonl"), "a") if journal else None
    try:
        while len(state.history) < budget:
            start = len(state.history)
            size = min(config.batch, budget - start)
            batch = propose_batch(state, size)
            jobs = []
            for k, pt in enumerate(batch):
                i = start + k
                if i < len(done):
                    if done[i].point != pt or done[i].seed != trial_seed(seed, i):
                        raise ResumeConflict(f"trial {i} in the journal differs from the replayed proposal")
                    continue
                jobs.append((i, pt))
            results = list(map_fn(evaluate, [(pt, trial_seed(seed, i)) for i, pt in jobs]))
            fresh = {i: r for (i, _), r in zip(jobs, results)}
            for k, pt in enumerate(batch):
                i = start + k
                if i in fresh:
                    score, tag, extra, wall = fresh[i]
                    rec = TrialRecord(i, pt, score, trial_seed(seed, i), wall, tag, extra)
                    if fh:
                        fh.write(record_to_json(rec) + "\n")
                        fh.flush()
                        timing.write(json.dumps({"index": i, "wall_time": wall}) + "\n")
                        timing.flush()
                else:
                    rec = done[i]
                state.history.append(rec)
                if on_trial:
                    on_trial(rec)
    finally:
        if fh:
            fh.close()
            timing.close()
    return state.best, state.history


def random_search(objective, space: DesignSpace, budget: int, seed: int = 0, **kw):
    """Uniform sampling baseline; trial i draws the same point TPE's startup would."""
    return optimize(objective, space, budget, seed=seed, uniform_only=True, **kw)


def best_so_far(history) -> list[float]:
    out, best = [], -np.inf
    for t in history:
        best = max(best, t.score)
        out.append(best)
    return out
