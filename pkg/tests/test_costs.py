import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msgan import kinematics as kin
from msgan.costs import (CostBundle, EePoseCost, JointLimitCost, PostureCost, StaticStabilityCost, barrier,
                         ee_pose_cost, evaluate, joint_limit_cost, posture_cost, static_stability_cost)
from msgan.exceptions import InvalidArgument

from conftest import central_difference, random_chain, rel_error

EXACT = 1e-12
N_CASES = 120


# --- unit values ---------------------------------------------------------


@pytest.mark.parametrize("x, value, grad", [(0.5, 0.0, 0.0), (-0.2, 0.02, -0.2), (1.3, 0.045, 0.3)])
def test_barrier_unit_values(x, value, grad):
    v, g = barrier(x, 0.0, 1.0)
    assert abs(v - value) <= EXACT
    assert abs(g - grad) <= EXACT


def test_barrier_rejects_inverted_bounds():
    with pytest.raises(InvalidArgument):
        barrier([0.0], [1.0], [0.0])


def test_ee_pose_cost_zero_at_reference(two_link):
    q = np.array([0.3, -0.4])
    v, g = ee_pose_cost(two_link, q, kin.forward_kinematics(two_link, q), np.ones(3))
    assert abs(v) <= EXACT
    np.testing.assert_allclose(g, 0.0, atol=EXACT)


def test_ee_pose_cost_quadratic_form(two_link):
    q = np.zeros(2)
    v, _ = ee_pose_cost(two_link, q, kin.forward_kinematics(two_link, q) - [0.1, 0, 0], np.ones(3))
    assert abs(v - 0.01) <= EXACT


def test_posture_cost_unit_values():
    v, g = posture_cost([0.2, 0.1], [0.2, 0.1], np.ones(2))
    assert v == 0.0 and np.all(g == 0.0)
    v, g = posture_cost([1.0, -1.0], [0.0, 0.0], np.ones(2))
    assert abs(v - 2.0) <= EXACT
    np.testing.assert_allclose(g, [2.0, -2.0], atol=EXACT)


def test_posture_cost_dimension_mismatch():
    with pytest.raises(InvalidArgument):
        posture_cost([1.0, 2.0], [0.0, 0.0], np.ones(3))


def test_joint_limit_cost_unit_values(two_link):
    v, g = joint_limit_cost(two_link, [0.5, -0.5])
    assert v == 0.0 and np.all(g == 0.0)
    v, g = joint_limit_cost(two_link, [np.pi + 0.1, 0.0])
    assert abs(v - 0.005) <= EXACT
    np.testing.assert_allclose(g, [0.1, 0.0], atol=EXACT)


def test_static_stability_cost_unit_values(two_link):
    v, g = static_stability_cost(two_link, [0.0, 0.0], -0.5, 0.5)
    assert abs(float(v) - 0.125) <= EXACT
    v, g = static_stability_cost(two_link, [np.pi / 2, 0.0], -0.5, 0.5)
    assert abs(float(v)) <= EXACT
    np.testing.assert_allclose(g, 0.0, atol=EXACT)


def test_bundle_of_zero_cost_terms(two_link):
    q = np.array([0.1, 0.2])
    bundle = CostBundle(two_link, [EePoseCost(kin.forward_kinematics(two_link, q)), JointLimitCost(),
                                   PostureCost(q)])
    rep = evaluate(bundle, q)
    assert rep.total == 0.0 and rep.all_below_threshold
    np.testing.assert_allclose(rep.grad, 0.0, atol=EXACT)


def test_single_term_bundle_is_weighted_term(three_link):
    q = np.array([0.4, -2.7, 2.9])
    term = JointLimitCost(weight=3.5)
    v, g = term(three_link, q)
    rep = evaluate(CostBundle(three_link, [term]), q)
    assert abs(rep.total - 3.5 * v) <= EXACT
    np.testing.assert_allclose(rep.grad, 3.5 * g, atol=EXACT)


def test_threshold_test_uses_raw_values(two_link):
    # weighted value 1e-3 is above the threshold, raw value 1e-7 is below
    term = JointLimitCost(weight=1e4, threshold=1e-6)
    q = np.array([np.pi + np.sqrt(2e-7), 0.0])
    rep = evaluate(CostBundle(two_link, [term]), q)
    assert rep.raw[0] <= 1e-6 < rep.total
    assert rep.all_below_threshold


def test_posture_term_never_gates_success(two_link):
    rep = evaluate(CostBundle(two_link, [PostureCost([3.0, 3.0])]), [0.0, 0.0])
    assert rep.raw[0] > 0 and rep.all_below_threshold


# --- finite-difference gradients -----------------------------------------


def _away_from_limits(chain, rng, margin=1e-3, spill=0.3):
    """Configurations inside or beyond the limits but never within ``margin`` of them."""
    while True:
        q = rng.uniform(chain.joint_lower - spill, chain.joint_upper + spill)
        if np.all(np.abs(q - chain.joint_lower) > margin) and np.all(np.abs(q - chain.joint_upper) > margin):
            return q


def test_ee_pose_gradient_matches_finite_differences():
    rng = np.random.default_rng(10)
    for _ in range(N_CASES):
        chain = random_chain(rng)
        q = chain.random_configurations(rng)
        p_ref, w = rng.normal(size=3), rng.uniform(0, 2, 3)
        _, g = ee_pose_cost(chain, q, p_ref, w)
        fd = central_difference(lambda x: ee_pose_cost(chain, x, p_ref, w)[0], q, h=1e-6)
        assert rel_error(g, fd) <= 1e-5


def test_posture_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    for _ in range(N_CASES):
        n = int(rng.integers(1, 8))
        q, q_nom, w = rng.normal(size=n), rng.normal(size=n), rng.uniform(0, 2, n)
        _, g = posture_cost(q, q_nom, w)
        fd = central_difference(lambda x: posture_cost(x, q_nom, w)[0], q, h=1e-6)
        assert rel_error(g, fd) <= 1e-5


def test_joint_limit_gradient_matches_finite_differences():
    rng = np.random.default_rng(12)
    for _ in range(N_CASES):
        chain = random_chain(rng)
        q = _away_from_limits(chain, rng)
        _, g = joint_limit_cost(chain, q)
        fd = central_difference(lambda x: joint_limit_cost(chain, x)[0], q, h=1e-6)
        assert rel_error(g, fd) <= 1e-5


def test_static_stability_gradient_matches_finite_differences():
    rng = np.random.default_rng(13)
    done = 0
    while done < N_CASES:
        chain = random_chain(rng)
        q = chain.random_configurations(rng)
        lo = rng.uniform(-1.0, 0.5)
        hi = lo + rng.uniform(0.05, 1.0)
        cx = kin.center_of_mass(chain, q)[0]
        if min(abs(cx - lo), abs(cx - hi)) < 1e-3:
            continue
        _, g = static_stability_cost(chain, q, lo, hi)
        fd = central_difference(lambda x: static_stability_cost(chain, x, lo, hi)[0], q, h=1e-6)
        assert rel_error(g, fd) <= 1e-5
        done += 1


def _random_bundle(chain, rng):
    return CostBundle(chain, [
        EePoseCost(rng.normal(size=3), rng.uniform(0, 1, 3), weight=rng.uniform(0.1, 2)),
        PostureCost(chain.random_configurations(rng), weight=rng.uniform(0.001, 0.1)),
        JointLimitCost(weight=rng.uniform(1, 10)),
        StaticStabilityCost(-0.3, 0.3, weight=rng.uniform(1, 10)),
    ])


def test_bundle_gradient_matches_finite_differences():
    rng = np.random.default_rng(14)
    done = 0
    while done < N_CASES:
        chain = random_chain(rng)
        bundle = _random_bundle(chain, rng)
        q = _away_from_limits(chain, rng)
        cx = kin.center_of_mass(chain, q)[0]
        if min(abs(cx + 0.3), abs(cx - 0.3)) < 1e-3:
            continue
        rep = evaluate(bundle, q)
        fd = central_difference(lambda x: evaluate(bundle, x).total, q, h=1e-6)
        assert rel_error(rep.grad, fd) <= 1e-5
        done += 1


# --- properties ----------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_costs_are_nonnegative(seed):
    rng = np.random.default_rng(seed)
    chain = random_chain(rng)
    q = rng.uniform(-4, 4, chain.dof)
    for v, _ in (joint_limit_cost(chain, q), static_stability_cost(chain, q, -0.2, 0.4),
                 ee_pose_cost(chain, q, rng.normal(size=3), rng.uniform(0, 1, 3)),
                 posture_cost(q, rng.normal(size=chain.dof), rng.uniform(0, 1, chain.dof))):
        assert float(v) >= 0.0


@settings(max_examples=60, deadline=None)
@given(lo=st.floats(-5, 5), width=st.floats(0, 5), side=st.booleans())
def test_barrier_is_c1_at_the_bounds(lo, width, side):
    hi = lo + width
    b = hi if side else lo
    h = 1e-8
    v_in, g_in = barrier(np.array([b - h if side else b + h]), [lo], [hi])
    v_out, g_out = barrier(np.array([b + h if side else b - h]), [lo], [hi])
    v_at, g_at = barrier(np.array([b]), [lo], [hi])
    assert abs(v_in - v_at) <= 1e-6 and abs(v_out - v_at) <= 1e-6
    assert np.all(np.abs(g_in - g_at) <= 1e-6) and np.all(np.abs(g_out - g_at) <= 1e-6)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), factor=st.floats(0.1, 10))
def test_evaluate_is_linear_in_weights(seed, factor):
    rng = np.random.default_rng(seed)
    chain = random_chain(rng)
    bundle = _random_bundle(chain, rng)
    q = rng.uniform(-3.5, 3.5, chain.dof)
    a, b = evaluate(bundle, q), evaluate(bundle.scaled(factor), q)
    assert b.raw == a.raw and b.all_below_threshold == a.all_below_threshold
    assert abs(b.total - factor * a.total) <= 1e-9 * max(1.0, abs(b.total))
    np.testing.assert_allclose(b.grad, factor * a.grad, rtol=1e-9, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_batched_terms_match_single_evaluation(seed):
    rng = np.random.default_rng(seed)
    chain = random_chain(rng)
    Q = rng.uniform(-3.5, 3.5, (7, chain.dof))
    p_ref, w = rng.normal(size=3), rng.uniform(0, 1, 3)
    for fn in (lambda q: joint_limit_cost(chain, q), lambda q: static_stability_cost(chain, q, -0.2, 0.4),
               lambda q: ee_pose_cost(chain, q, p_ref, w)):
        vb, gb = fn(Q)
        assert np.shape(vb) == (7,) and gb.shape == Q.shape
        for i, q in enumerate(Q):
            v, g = fn(q)
            assert abs(float(np.squeeze(v)) - vb[i]) <= 1e-12
            np.testing.assert_allclose(g, gb[i], atol=1e-12)
