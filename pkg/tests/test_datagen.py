import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from momlp import datagen as dg
from momlp.lp_core import solve_lp, SolverOptions


def _path_costs(grid, c):
    """Cost of every monotone corner-to-corner path, by enumeration."""
    index = {e: j for j, e in enumerate(grid.edges())}
    k = grid.k
    costs = []
    for moves in set(itertools.permutations("E" * (k - 1) + "N" * (k - 1))):
        r = col = 0
        total = 0.0
        for mv in moves:
            nr, ncol = (r, col + 1) if mv == "E" else (r + 1, col)
            total += c[index[(grid.node(r, col), grid.node(nr, ncol))]]
            r, col = nr, ncol
        costs.append(total)
    return costs


def test_incidence_matrix_structure():
    grid = dg.GridSpec(k=4)
    M = dg.incidence_matrix(grid)
    assert M.shape == (16, 24)
    np.testing.assert_array_equal(M.sum(axis=0), 0)
    np.testing.assert_array_equal(np.abs(M).sum(axis=0), 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_shortest_path_matches_enumeration(seed):
    grid = dg.GridSpec(k=3)
    c = np.random.default_rng(seed).uniform(0.1, 5.0, grid.n_edges)
    sol = solve_lp(dg.build_grid_lp(grid, c), SolverOptions(allow_degenerate=True))
    assert sol.objective == pytest.approx(min(_path_costs(grid, c)), abs=1e-9)
    assert set(np.round(sol.x, 9)) <= {0.0, 1.0}


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_knapsack_matches_greedy_ratio(seed):
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.1, 1.0, 6)
    u = rng.uniform(0.0, 1.0, 6)
    B = dg.gen_budget(p, rng)
    # greedy by utility/price fills the budget, the last item fractionally
    left, value = B, 0.0
    for j in np.argsort(-u / p):
        take = min(1.0, left / p[j])
        value += take * u[j]
        left -= take * p[j]
        if left <= 0:
            break
    sol = solve_lp(dg.build_knapsack_lp(p, B, -u), SolverOptions(allow_degenerate=True))
    assert -sol.objective == pytest.approx(value, abs=1e-9)


def test_normalized_knapsack_lies_in_unit_ball(rng):
    ks = dg.KnapsackSpec(n_items=5, price_mode="uniform-0-1", normalized=True)
    V = dg.GroundTruth.draw(5, ks.d, rng).V
    for _ in range(30):
        s = dg.gen_fk_instance(V, ks, dg.NoiseSpec(eta_bar=1.0), rng)
        assert np.linalg.norm(s.x_star) <= 1.0 and np.linalg.norm(s.z) <= 1.0 + 1e-12


def test_budget_range(rng):
    for _ in range(200):
        p = rng.integers(1, 1001, 10).astype(float)
        B = dg.gen_budget(p, rng)
        assert p.max() <= B <= p.sum()


def test_noiseless_objectives():
    V = np.array([[1.0, 0.0], [0.0, 1.0]])
    z = np.array([0.3, 1.0])
    rng = np.random.default_rng(0)
    np.testing.assert_allclose(dg.sp_objective(V, z, dg.NoiseSpec(deg=2), rng),
                               (V @ z / np.sqrt(2) + 3) ** 2 + 1)
    np.testing.assert_allclose(dg.fk_utility(V, z, dg.NoiseSpec(deg=3), rng), (V @ z) ** 3)
    with pytest.raises(ValueError):
        dg.NoiseSpec(eps_bar=1.0)


def test_scale_noise_only_rescales(rng):
    grid = dg.GridSpec(k=3)
    V = dg.GroundTruth.draw(grid.n_edges, 4, rng).V
    r1, r2 = dg.rng_for(0, 3), dg.rng_for(0, 3)
    for _ in range(20):
        s0 = dg.gen_sp_instance(V, dg.NoiseSpec(), r1, grid)
        s2 = dg.gen_sp_instance(V, dg.NoiseSpec(alpha_bar=2.0), r2, grid)
        np.testing.assert_array_equal(s0.x_star, s2.x_star)
        ratio = s2.c / s0.c
        np.testing.assert_allclose(ratio, 3.0 if s0.z[0] > 0.5 else 1.0)


def test_generation_is_reproducible():
    grid = dg.GridSpec(k=3)
    V = dg.GroundTruth.draw(grid.n_edges, 4, dg.rng_for(4, 0)).V
    a = dg.gen_sp_instance(V, dg.NoiseSpec(eps_bar=0.3), dg.rng_for(4, 1), grid)
    b = dg.gen_sp_instance(V, dg.NoiseSpec(eps_bar=0.3), dg.rng_for(4, 1), grid)
    np.testing.assert_array_equal(a.c, b.c)
    np.testing.assert_array_equal(a.x_star, b.x_star)


def test_separable_stream_has_unit_margin():
    st_ = dg.gen_separable_instance("sp", 60, dg.rng_for(2, 0))
    margins = [dg.sample_margin(s, s.c) for s in st_.samples]
    assert min(margins) == pytest.approx(1.0)
    for s in st_.samples:
        np.testing.assert_allclose(s.c, st_.theta_star @ s.z)
    assert st_.perceptron_bound() >= st_.theta_bar**2


def test_dataset_round_trip(tmp_path, small_fk):
    path = tmp_path / "data.jsonl"
    dg.write_dataset(small_fk[:5], path)
    back = dg.read_dataset(path)
    for a, b in zip(small_fk[:5], back):
        np.testing.assert_array_equal(a.x_star, b.x_star)
        np.testing.assert_array_equal(a.c, b.c)
        assert a.basis == b.basis and a.meta == b.meta
    with pytest.raises(OSError, match="cannot write"):
        dg.write_dataset(small_fk[:1], tmp_path / "missing" / "x.jsonl")


def test_shape_checks(rng):
    with pytest.raises(ValueError):
        dg.gen_sp_instance(np.ones((3, 2)), dg.NoiseSpec(), rng)
    with pytest.raises(ValueError):
        dg.build_knapsack_lp([1.0, -1.0], 1.0, [1.0, 1.0])
    with pytest.raises(ValueError):
        dg.gen_separable_instance("xx", 3, rng)
