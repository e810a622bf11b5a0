import json
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from benchmarks import mixed_objective, mixed_space
from handforge.space import DesignSpace, ParamSpec, TrialRecord
from handforge.tpe import (
    OptimizerState,
    ParzenCategorical,
    ParzenContinuous,
    ParzenInteger,
    ResumeConflict,
    TpeConfig,
    best_so_far,
    fit_density,
    optimize,
    propose,
    random_search,
    split_trials,
)

LINE = DesignSpace([ParamSpec("x", "continuous", "g", bounds=(0.0, 1.0))], "line")


def records(scores):
    return [TrialRecord(i, LINE.make_point({"x": 0.5}), s, 0) for i, s in enumerate(scores)]


def test_split_eight_trials():
    good, bad = split_trials(records(range(8)), 0.25)
    assert [t.index for t in good] == [7, 6]
    assert len(bad) == 6


def test_split_single_trial():
    good, bad = split_trials(records([0.3]), 0.25)
    assert len(good) == 1 and bad == []


def test_split_ties_prefer_recent():
    good, _ = split_trials(records([0.5] * 4), 0.25)
    assert [t.index for t in good] == [3]


def test_split_empty():
    with pytest.raises(ValueError):
        split_trials([], 0.25)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=60), st.floats(0.01, 0.99))
def test_split_is_a_partition(scores, gamma):
    hist = records(scores)
    good, bad = split_trials(hist, gamma)
    assert len(good) == max(1, math.ceil(gamma * len(hist)))
    ids = sorted(t.index for t in good + bad)
    assert ids == list(range(len(hist)))
    if bad:
        assert min(t.score for t in good) >= max(t.score for t in bad)


def test_categorical_smoothing():
    est = ParzenCategorical([0] * 10, 2, 1.0)
    assert est.p[0] == pytest.approx(11 / 12, abs=1e-15)
    assert est.p.sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30)
@given(st.lists(st.floats(-3, 5), max_size=20), st.sampled_from(["range", "std"]), st.floats(0.1, 3))
def test_continuous_estimator_integrates_to_one(obs, rule, w):
    est = ParzenContinuous(obs, -3.0, 5.0, w, rule)
    pts = sorted(set(obs))
    total, _ = quad(lambda x: math.exp(est.logpdf(x)), -3.0, 5.0, points=pts or None, limit=400)
    assert total == pytest.approx(1.0, abs=1e-6)
    assert est.cdf(5.0) == pytest.approx(1.0, abs=1e-9)


@given(st.lists(st.integers(1, 6), max_size=15))
def test_integer_estimator_sums_to_one(obs):
    est = ParzenInteger(obs, 1, 6)
    assert np.exp(est.logpdf(np.arange(1, 7))).sum() == pytest.approx(1.0, abs=1e-9)


def test_empty_model_is_uniform(space):
    model = fit_density([], space)
    a = space.sample_uniform(0)
    b = space.sample_uniform(1)
    # same active structure gives the same uniform density
    b = space.make_point({**a.values, **{k: v for k, v in b.values.items() if k in a.values}})
    assert model.logpdf(a) == pytest.approx(model.logpdf(b), abs=1e-12)


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_log_density_finite_in_bounds(fit_seed, eval_seed):
    sp = mixed_space()
    pts = [sp.sample_uniform(np.random.default_rng([fit_seed, i])) for i in range(7)]
    model = fit_density(pts, sp)
    assert math.isfinite(model.logpdf(sp.sample_uniform(eval_seed)))


def test_startup_is_uniform_sampling():
    state = OptimizerState(LINE, TpeConfig(n_startup=5), seed=3)
    a = propose(state)
    assert propose(state) == a
    assert 0.0 <= a.values["x"] <= 1.0


def test_proposals_concentrate_near_optimum():
    state = OptimizerState(LINE, TpeConfig(), seed=0)
    rng = np.random.default_rng(0)
    for i in range(50):
        x = float(rng.uniform())
        state.history.append(TrialRecord(i, LINE.make_point({"x": x}), -((x - 0.7) ** 2), 0))
    xs = [propose(state, 50 + k).values["x"] for k in range(1000)]
    assert 0.55 <= np.mean(xs) <= 0.85


def test_identical_sets_still_in_bounds():
    state = OptimizerState(LINE, TpeConfig(n_startup=1), seed=0)
    state.history = records([0.1, 0.1])
    for k in range(20):
        assert 0.0 <= propose(state, 2 + k).values["x"] <= 1.0


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_proposals_valid_in_conditional_space(seed):
    from handforge.space import build_power_grasp_space

    space = build_power_grasp_space()
    state = OptimizerState(space, TpeConfig(n_startup=4), seed=seed)
    rng = np.random.default_rng(seed)
    for i in range(12):
        state.history.append(TrialRecord(i, space.sample_uniform(rng), float(rng.uniform()), 0))
    pt = propose(state)
    # make_point re-validates bounds and activation
    assert space.make_point(pt.values) == pt


def test_budget_one():
    best, hist = optimize(lambda p: p.values["x"], LINE, 1)
    assert len(hist) == 1 and best is hist[0]


def test_exactly_budget_evaluations():
    calls = []
    optimize(lambda p: calls.append(1) or 0.0, LINE, 23, TpeConfig(n_startup=5, batch=4))
    assert len(calls) == 23


def test_best_so_far_monotone():
    _, hist = optimize(lambda p: -abs(p.values["x"] - 0.3), LINE, 40, TpeConfig(n_startup=5), seed=1)
    curve = best_so_far(hist)
    assert all(b >= a for a, b in zip(curve, curve[1:]))
    assert curve[-1] == max(t.score for t in hist)


def test_failures_score_zero():
    def boom(p):
        if p.values["x"] > 0.5:
            raise RuntimeError("infeasible")
        return 1.0

    _, hist = optimize(boom, LINE, 20, seed=2)
    bad = [t for t in hist if t.point.values["x"] > 0.5]
    assert bad and all(t.score == 0.0 and t.tag == "error" for t in bad)
    assert "infeasible" in bad[0].extra["error"]


def test_nan_becomes_error():
    _, hist = optimize(lambda p: float("nan"), LINE, 2)
    assert all(t.score == 0.0 and t.tag == "error" for t in hist)


def test_objective_receives_trial_seed():
    seen = []
    optimize(lambda p, s: seen.append(s) or 0.0, LINE, 3, seed=9)
    assert len(set(seen)) == 3


def test_journal_resume_matches_fresh_run(tmp_path):
    sp = mixed_space()
    cfg = TpeConfig(n_startup=5, batch=2)
    optimize(mixed_objective, sp, 9, cfg, seed=4, journal=tmp_path / "a.jsonl")
    optimize(mixed_objective, sp, 20, cfg, seed=4, journal=tmp_path / "a.jsonl")
    optimize(mixed_objective, sp, 20, cfg, seed=4, journal=tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    lines = (tmp_path / "a.jsonl").read_text().splitlines()
    assert [json.loads(x)["index"] for x in lines] == list(range(20))


def test_resume_conflict(tmp_path):
    sp = mixed_space()
    j = tmp_path / "j.jsonl"
    optimize(mixed_objective, sp, 6, seed=1, journal=j)
    with pytest.raises(ResumeConflict):
        optimize(mixed_objective, sp, 8, seed=2, journal=j)
    with pytest.raises(ResumeConflict):
        optimize(mixed_objective, sp, 5, seed=1, journal=j)
    j.write_text("not json\n")
    with pytest.raises(ResumeConflict):
        optimize(mixed_objective, sp, 6, seed=1, journal=j)


def test_batched_run_is_deterministic():
    cfg = TpeConfig(n_startup=6, batch=4)
    a = [t.score for t in optimize(mixed_objective, mixed_space(), 30, cfg, seed=8)[1]]
    b = [t.score for t in optimize(mixed_objective, mixed_space(), 30, cfg, seed=8)[1]]
    assert a == b


def test_config_validation():
    for kw in ({"gamma": 0.0}, {"gamma": 1.0}, {"n_startup": 0}, {"n_candidates": 0}, {"prior_weight": 0}, {"bandwidth_rule": "x"}):
        with pytest.raises(ValueError):
            TpeConfig(**kw)


def test_tpe_beats_random_search():
    space = mixed_space()
    t0 = time.perf_counter()
    tpe = [optimize(mixed_objective, space, 150, seed=s)[0].score for s in range(20)]
    rnd = [random_search(mixed_objective, space, 150, seed=s)[0].score for s in range(20)]
    assert time.perf_counter() - t0 < 30.0
    assert np.median(tpe) > np.median(rnd)
