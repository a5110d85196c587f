import numpy as np
import pytest

from momlp import margin as mg
from momlp.lp_core import Basis


def _W(sample, i):
    """Feature matrix of non-basic coordinate i, built from scratch."""
    e = np.zeros(sample.n)
    e[i] = 1.0
    B = sample.basis.as_array()
    e[B] -= np.linalg.solve(sample.A[:, B], sample.A[:, i])
    return np.outer(e, sample.z)


def test_reduced_costs_are_inner_products_with_W(small_fk, rng):
    s = small_fk[0]
    theta = rng.normal(size=(s.n, s.d))
    r = mg.predicted_reduced_costs(s, theta)
    for i in s.basis.complement:
        assert r[i] == pytest.approx(np.sum(_W(s, i) * theta))


def test_rows_agree_with_per_sample_functions(small_fk, rng):
    rows = mg.MarginRows(small_fk)
    theta = rng.normal(size=(rows.n, rows.d))
    per_sample = [mg.margin_violation(s, theta) for s in small_fk]
    np.testing.assert_allclose(rows.losses(theta), per_sample, atol=1e-10)
    assert rows.mean_loss(theta) == pytest.approx(np.mean(per_sample))
    sub = np.mean([mg.margin_subgradient(s, theta) for s in small_fk], axis=0)
    np.testing.assert_allclose(rows.mean_subgradient(theta), sub, atol=1e-10)
    norms = [np.sum(_W(small_fk[t], i) ** 2) for t, i in zip(rows.t, rows.i)]
    np.testing.assert_allclose(rows.row_norms_sq(), norms)
    w = rng.uniform(size=rows.K)
    explicit = sum(wk * _W(small_fk[t], i) for wk, t, i in zip(w, rows.t, rows.i))
    np.testing.assert_allclose(rows.accumulate(w), explicit, atol=1e-10)


def test_prefix_equals_rows_of_prefix(small_sp, rng):
    rows = mg.MarginRows(small_sp)
    sub = rows.prefix(17)
    ref = mg.MarginRows(small_sp[:17])
    theta = rng.normal(size=(rows.n, rows.d))
    assert sub.T == 17 and sub.K == ref.K
    np.testing.assert_array_equal(sub.reduced_costs(theta), ref.reduced_costs(theta))
    with pytest.raises(ValueError):
        rows.prefix(0)


def test_margin_subgradient_central_differences(small_fk, rng):
    h = 1e-6
    checked = 0
    for s in small_fk:
        theta = rng.normal(0, 3, size=(s.n, s.d))
        r = mg.predicted_reduced_costs(s, theta)[s.basis.complement_array()]
        if np.abs(1 - r).min() < 1e-3:
            continue
        fd = np.zeros_like(theta)
        for idx in np.ndindex(theta.shape):
            e = np.zeros_like(theta)
            e[idx] = h
            fd[idx] = (mg.margin_violation(s, theta + e) - mg.margin_violation(s, theta - e)) / (2 * h)
        np.testing.assert_allclose(mg.margin_subgradient(s, theta), fd, atol=1e-6)
        checked += 1
    assert checked >= 30


def test_suboptimality_loss_is_nonnegative_and_zero_at_truth(small_fk, rng):
    s = small_fk[0]
    for _ in range(10):
        assert mg.suboptimality_loss(s, rng.normal(size=(s.n, s.d))) >= -1e-10
    # a predictor that outputs c itself makes x* optimal
    theta = np.zeros((s.n, s.d))
    theta[:, -1] = s.c / s.z[-1]
    assert mg.suboptimality_loss(s, theta) == pytest.approx(0.0, abs=1e-10)


def test_relative_losses_by_hand():
    c = np.array([2.0, 1.0, 3.0])
    x_star = np.array([0.0, 1.0, 0.0])
    x = np.array([1.0, 0.0, 0.0])
    assert mg.estimate_loss(c, x, x_star) == 1.0
    assert mg.relative_loss_sp(c, x, x_star) == 1.0
    # utility u = -c_lp; optimum takes the best item
    c_lp = -np.array([3.0, 4.0])
    assert mg.decision_relative_loss("fk", c_lp, [1, 0], [0, 1]) == pytest.approx(1.0 / 5.0)
    assert np.isnan(mg.decision_relative_loss("sp", np.zeros(3), x, x_star))
    with pytest.raises(ValueError):
        mg.decision_relative_loss("xx", c, x, x_star)


def test_projection():
    th = np.full((2, 2), 3.0)
    np.testing.assert_allclose(np.linalg.norm(mg.project_frobenius(th, 1.5)), 1.5)
    assert mg.project_frobenius(th, 0.0) is th
    assert mg.project_frobenius(th, 100.0) is th
    pm = mg.ParameterMatrix(th, radius=1.0).projected()
    assert np.linalg.norm(pm.theta) == pytest.approx(1.0)


def test_sample_validation():
    A = np.array([[1.0, 1.0]])
    with pytest.raises(ValueError):
        mg.TrainingSample([0.5, 0.5], A, [1.0], [1.0], Basis((0,), 2))
    with pytest.raises(ValueError):
        mg.TrainingSample([1.0, 0.0], A, [2.0], [1.0], Basis((0,), 2))
    s = mg.TrainingSample([1.0, 0.0], A, [1.0], [1.0], Basis((0,), 2))
    with pytest.raises(ValueError):
        s.x_star[0] = 2.0
    with pytest.raises(ValueError):
        mg.predict_objective(np.zeros((2, 3)), [1.0])
