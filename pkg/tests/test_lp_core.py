import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from momlp import lp_core as lc
from momlp.harness.selftest import random_nondegenerate_lp


def _lp(c, A, b):
    return lc.StandardFormLP(np.asarray(c, float), np.asarray(A, float), np.asarray(b, float))


def test_hand_solved_two_variable_lp():
    # max x1 + x2 s.t. x1 + 2 x2 <= 4, 3 x1 + x2 <= 6; the two constraints meet at (1.6, 1.2)
    lp = _lp([-1, -1, 0, 0], [[1, 2, 1, 0], [3, 1, 0, 1]], [4, 6])
    sol = lc.solve_lp(lp)
    np.testing.assert_allclose(sol.x, [1.6, 1.2, 0, 0], atol=1e-12)
    assert sol.objective == pytest.approx(-2.8)
    assert sol.basis.indices == (0, 1)
    np.testing.assert_allclose(sol.basis_inverse, np.linalg.inv([[1, 2], [3, 1]]))
    np.testing.assert_allclose(sol.dual_price, np.linalg.solve(np.array([[1, 2], [3, 1]]).T, [-1, -1]))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_matches_vertex_enumeration(seed):
    lp = random_nondegenerate_lp(np.random.default_rng(seed))
    sol = lc.solve_lp(lp)
    ref = lc.vertex_enumeration_oracle(lp)
    assert abs(sol.objective - ref.objective) <= 1e-8
    assert sol.basis == ref.basis


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_optimality_test_accepts_only_the_optimal_basis(seed):
    lp = random_nondegenerate_lp(np.random.default_rng(seed))
    best = lc.vertex_enumeration_oracle(lp).basis
    for B in lc.feasible_bases(lp):
        assert lc.check_optimality(lp.c, lp.A, B) == (B == best)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_suboptimality_bound_holds_for_every_feasible_basis(seed):
    lp = random_nondegenerate_lp(np.random.default_rng(seed))
    x_star = lc.vertex_enumeration_oracle(lp).x
    for B in lc.feasible_bases(lp):
        gap = lp.c @ lc.basic_solution(lp, B) - lp.c @ x_star
        assert lc.suboptimality_bound(lp, B, x_star) >= gap - 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.5, 3.0, 100.0]))
def test_positive_scaling_keeps_the_basis(seed, alpha):
    lp = random_nondegenerate_lp(np.random.default_rng(seed))
    assert lc.solve_lp(lp.with_objective(alpha * lp.c)).basis == lc.solve_lp(lp).basis


def test_reduced_costs_match_definition(rng):
    lp = random_nondegenerate_lp(rng)
    for B in lc.feasible_bases(lp):
        idx = B.as_array()
        p = np.linalg.solve(lp.A[:, idx].T, lp.c[idx])
        r = lc.reduced_costs(lp.c, lp.A, B)
        np.testing.assert_allclose(r, lp.c - lp.A.T @ p, atol=1e-10)
        np.testing.assert_allclose(r[idx], 0.0, atol=1e-10)


def test_infeasible_and_unbounded():
    with pytest.raises(lc.InfeasibleLP):
        lc.solve_lp(_lp([1, 1], [[1, 1]], [-1]))
    with pytest.raises(lc.UnboundedLP):
        lc.solve_lp(_lp([-1, 0], [[1, -1]], [1]))


def test_degenerate_optimum_policies():
    # min -x1 s.t. x1 + x2 = 1, x1 + x3 = 1: optimum (1, 0, 0) has one positive entry for m = 2
    lp = _lp([-1, 0, 0], [[1, 1, 0], [1, 0, 1]], [1, 1])
    with pytest.raises(lc.DegenerateLP) as info:
        lc.solve_lp(lp)
    assert info.value.solution is not None
    sol = lc.solve_lp(lp, lc.SolverOptions(allow_degenerate=True))
    np.testing.assert_allclose(sol.x, [1, 0, 0])
    pert = lc.solve_lp(lp, lc.SolverOptions(perturb=1e-7))
    np.testing.assert_allclose(pert.x, [1, 0, 0], atol=1e-12)
    np.testing.assert_allclose(lc.basic_solution(lp, pert.basis), pert.x, atol=1e-12)


def test_pivot_limit():
    lp = _lp([-1, -1, 0, 0], [[1, 2, 1, 0], [3, 1, 0, 1]], [4, 6])
    with pytest.raises(lc.PivotLimitReached):
        lc.solve_lp(lp, lc.SolverOptions(max_pivots=1))


def test_warm_start_and_phase_one_cache_do_not_change_results(rng):
    lp = random_nondegenerate_lp(rng)
    cold = lc.solve_lp(lp)
    lc._PHASE_ONE_CACHE.clear()
    fresh = lc.solve_lp(lp)
    warm = lc.solve_lp(lp.with_objective(-lp.c + 5.0 * np.abs(lp.c).max()), initial_basis=cold.basis.indices)
    again = lc.solve_lp(lp.with_objective(-lp.c + 5.0 * np.abs(lp.c).max()))
    np.testing.assert_array_equal(cold.x, fresh.x)
    assert warm.basis == again.basis or abs(warm.objective - again.objective) < 1e-9


def test_extract_basis_and_oracle_limits():
    assert lc.extract_basis(np.array([0.0, 2.0, 0.0, 1.0]), 2).indices == (1, 3)
    with pytest.raises(lc.DegenerateLP):
        lc.extract_basis(np.array([0.0, 2.0, 0.0, 0.0]), 2)
    with pytest.raises(ValueError):
        lc.vertex_enumeration_oracle(_lp(np.ones(11), np.ones((1, 11)), [1]))


def test_problem_data_is_read_only():
    lp = _lp([1, 1], [[1, 1]], [1])
    with pytest.raises(ValueError):
        lp.c[0] = 5.0
    with pytest.raises(ValueError):
        _lp([1, 1, 1], [[1, 1]], [1])
