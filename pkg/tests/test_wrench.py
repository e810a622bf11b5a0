import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from handforge.grasp.closing import Contact, ContactSet, default_tangent
from handforge.grasp import wrench as wrench_mod
from handforge.grasp.wrench import (
    DIRECTIONS,
    StabilityScore,
    WrenchTestSpec,
    cone_edges,
    grasp_score,
    hand_score,
    resist_magnitude,
)
from oracles import resist_oracle

SPEC = WrenchTestSpec()
FZ_NEG = -np.eye(6)[2]
FZ_POS = np.eye(6)[2]


def contact(p, n, mu=0.5, cap=10.0, t=None):
    n = np.asarray(n, float)
    n = n / np.linalg.norm(n)
    return Contact(np.asarray(p, float), n, mu, cap, default_tangent(n) if t is None else t)


def random_contacts(rng, k):
    out = []
    for _ in range(k):
        n = rng.normal(size=3)
        out.append(contact(rng.uniform(-60, 60, 3), n, rng.uniform(0, 1), rng.uniform(1, 20)))
    return out


def test_no_contacts_resist_nothing():
    assert resist_magnitude([], FZ_NEG) == 0.0
    assert resist_magnitude(ContactSet(), FZ_NEG) == 0.0


def test_single_frictionless_contact():
    c = contact((0, 0, 0), (0, 0, 1), mu=0.0, cap=10.0)
    assert resist_magnitude([c], FZ_NEG) == pytest.approx(10.0, abs=1e-9)
    # pushing along the normal cannot be resisted from one side
    assert resist_magnitude([c], FZ_POS) == 0.0


def test_antipodal_pair_lift():
    cs = [contact((30, 0, 0), (-1, 0, 0)), contact((-30, 0, 0), (1, 0, 0))]
    alpha = resist_magnitude(cs, FZ_POS)
    # with a cone edge aligned to z each side carries mu * cap vertically
    assert alpha == pytest.approx(0.5 * 10 * 2, abs=1e-7)
    assert alpha == pytest.approx(resist_oracle(cs, FZ_POS), abs=1e-3 * SPEC.F_max)


def test_cone_edges_have_unit_normal_component():
    c = contact((1, 2, 3), (1, 1, 0), mu=0.7)
    E = cone_edges(c, 8)
    np.testing.assert_allclose(E @ c.normal, 1.0, atol=1e-12)
    tang = E - np.outer(E @ c.normal, c.normal)
    np.testing.assert_allclose(np.linalg.norm(tang, axis=1), 0.7, atol=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_lp_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    cs = random_contacts(rng, int(rng.integers(1, 5)))
    m = int(rng.integers(3, 9))
    spec = WrenchTestSpec(cone_edges=m)
    k = int(rng.integers(12))
    t0 = time.perf_counter()
    a = resist_magnitude(cs, DIRECTIONS[k], spec)
    assert time.perf_counter() - t0 < 1.0
    b = resist_oracle(cs, DIRECTIONS[k], m=m)
    assert abs(a - b) <= 1e-3 * spec.alpha_max[k]


contact_sets = st.integers(0, 2**32 - 1).map(lambda s: random_contacts(np.random.default_rng(s), 1 + s % 4))


@settings(max_examples=60)
@given(contact_sets, st.integers(0, 2**32 - 1), st.integers(0, 11))
def test_adding_contacts_never_hurts(cs, extra_seed, k):
    more = cs + random_contacts(np.random.default_rng(extra_seed), 1)
    assert resist_magnitude(more, DIRECTIONS[k]) >= resist_magnitude(cs, DIRECTIONS[k]) - 1e-7


@settings(max_examples=60)
@given(contact_sets, st.integers(0, 11))
def test_doubling_caps_doubles_alpha(cs, k):
    doubled = [Contact(c.point, c.normal, c.mu, 2 * c.cap, c.tangent) for c in cs]
    a = resist_magnitude(cs, DIRECTIONS[k])
    assert resist_magnitude(doubled, DIRECTIONS[k]) == pytest.approx(2 * a, rel=1e-7, abs=1e-9)


@settings(max_examples=60)
@given(contact_sets, st.integers(0, 11), st.integers(0, 2**32 - 1))
def test_rigid_rotation_invariance(cs, k, rseed):
    R = Rotation.random(random_state=rseed).as_matrix()
    rotated = [Contact(R @ c.point, R @ c.normal, c.mu, c.cap, R @ c.tangent) for c in cs]
    w = DIRECTIONS[k]
    w_rot = np.concatenate([R @ w[:3], R @ w[3:]])
    a = resist_magnitude(cs, w)
    assert abs(resist_magnitude(rotated, w_rot) - a) <= 1e-9 * max(1.0, a)


def test_gravity_offset_is_optional():
    cs = [contact((0, 0, 0), (0, 0, 1), mu=0.0, cap=10.0)]
    heavy = WrenchTestSpec(gravity=True, object_mass=0.5)
    # the contact also has to carry the weight, leaving less for the disturbance
    assert resist_magnitude(cs, FZ_NEG, heavy) == pytest.approx(10.0 - 0.5 * 9.81, abs=1e-9)


def test_alpha_max_values():
    np.testing.assert_allclose(SPEC.alpha_max, [20.0] * 6 + [6.0] * 6)


def test_spec_validation():
    with pytest.raises(ValueError):
        WrenchTestSpec(cone_edges=2)
    with pytest.raises(ValueError):
        WrenchTestSpec(F_max=0)


def box_grasp(cap=1e4):
    pts = [(20, 0, 0), (-20, 0, 0), (0, 20, 0), (0, -20, 0), (0, 0, 20), (0, 0, -20)]
    return [contact(p, -np.asarray(p, float), mu=1.0, cap=cap) for p in pts]


def test_full_resistance_scores_one():
    s = grasp_score(box_grasp())
    assert s.per_direction == (1.0,) * 12
    assert s.S_t == 1.0


def test_empty_and_infeasible_score_zero():
    assert grasp_score([]).S_t == 0.0
    assert grasp_score(ContactSet(tuple(box_grasp()), feasible=False)).S_t == 0.0


def test_six_full_six_half(monkeypatch):
    amax = SPEC.alpha_max

    def fake(contacts, w_hat, spec):
        k = int(np.flatnonzero(np.all(DIRECTIONS == w_hat, axis=1))[0])
        return amax[k] if k % 2 == 0 else 0.5 * amax[k]

    monkeypatch.setattr(wrench_mod, "resist_magnitude", fake)
    assert grasp_score(box_grasp()).S_t == 0.75
    assert StabilityScore.from_fractions([1.0] * 6 + [0.5] * 6).S_t == 0.75


@settings(max_examples=100)
@given(contact_sets)
def test_scores_bounded_and_mean(cs):
    s = grasp_score(cs)
    assert all(0.0 <= v <= 1.0 for v in s.per_direction)
    assert s.S_t == sum(s.per_direction) / 12
    assert 0.0 <= s.S_t <= 1.0


def test_hand_score_examples():
    assert hand_score({"hammer": [1.0, 0.5, 0.2]}, 2) == 0.75
    assert hand_score({"hammer": [0.9], "spoon": [0.6], "knife": [0.3]}, 1) == pytest.approx(0.6, abs=1e-15)
    assert hand_score({"a": [0.0, 0.0], "b": [0.0, 0.0]}, 2) == 0.0
    # only the K best count, whatever the order
    assert hand_score({"a": [0.1, 0.9, 0.3]}, 1) == 0.9


def test_hand_score_errors():
    with pytest.raises(ValueError, match="spoon"):
        hand_score({"hammer": [0.5, 0.5], "spoon": [0.5]}, 2)
    with pytest.raises(ValueError):
        hand_score({"hammer": [0.5]}, 0)


@given(st.dictionaries(st.sampled_from(["a", "b", "c"]), st.lists(st.floats(0, 1), min_size=3, max_size=8), min_size=1), st.integers(1, 3))
def test_hand_score_in_unit_interval(scores, K):
    assert 0.0 <= hand_score(scores, K) <= 1.0
