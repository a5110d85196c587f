import numpy as np
import pytest

from momlp import baselines as bl
from momlp import datagen as dg


def test_least_squares_recovers_exact_model(rng):
    theta = rng.normal(size=(4, 3))
    Z = rng.normal(size=(50, 3))
    np.testing.assert_allclose(bl.least_squares(Z, Z @ theta.T), theta, atol=1e-10)


def test_singular_design():
    Z = np.ones((10, 2))
    C = np.ones((10, 3))
    with pytest.warns(RuntimeWarning):
        th = bl.least_squares(Z, C)
    np.testing.assert_allclose(th @ Z.T, C.T)
    with pytest.raises(np.linalg.LinAlgError):
        bl.least_squares(Z, C, allow_pinv=False)


def test_ridge_matches_augmented_least_squares(small_fk):
    lam = 0.3
    Z = np.stack([s.z for s in small_fk])
    C = np.stack([s.c for s in small_fk])
    T, d = Z.shape
    # ||C - Z Theta^T||^2 + T lam ||Theta||^2 as one stacked least-squares problem
    Za = np.vstack([Z, np.sqrt(T * lam) * np.eye(d)])
    Ca = np.vstack([C, np.zeros((d, C.shape[1]))])
    ref = np.linalg.lstsq(Za, Ca, rcond=None)[0].T
    np.testing.assert_allclose(bl.ridge_fit(small_fk, lam).theta, ref, atol=1e-10)
    np.testing.assert_allclose(bl.ridge_fit(small_fk, 0.0).theta, bl.ols_fit(small_fk).theta)
    with pytest.raises(ValueError):
        bl.ridge_fit(small_fk, -1.0)


def test_baselines_need_c(small_fk):
    bare = [s.with_c(None) for s in small_fk[:3]]
    with pytest.raises(ValueError):
        bl.ols_fit(bare)


def test_spo_plus_loss_properties(small_fk, rng):
    s = small_fk[0]
    for _ in range(10):
        assert bl.spo_plus_loss(rng.normal(size=(s.n, s.d)), s) >= -1e-10
    theta = np.zeros((s.n, s.d))
    theta[:, -1] = s.c / s.z[-1]  # Theta z = c
    assert bl.spo_plus_loss(theta, s) == pytest.approx(0.0, abs=1e-10)


def test_spo_plus_subgradient_central_differences(small_fk, rng):
    h = 1e-6
    checked = 0
    for s in small_fk[:30]:
        theta = rng.normal(0, 3, size=(s.n, s.d))
        fd = np.zeros_like(theta)
        for idx in np.ndindex(theta.shape):
            e = np.zeros_like(theta)
            e[idx] = h
            fd[idx] = (bl.spo_plus_loss(theta + e, s) - bl.spo_plus_loss(theta - e, s)) / (2 * h)
        g = bl.spo_plus_subgradient(theta, s)
        if np.linalg.norm(fd - g) <= 1e-4 * max(np.linalg.norm(g), 1e-8):
            checked += 1
    # kinks are measure zero; nearly every random point is smooth
    assert checked >= 28


def test_spo_plus_fit_lowers_the_surrogate(small_fk):
    rep = bl.spo_plus_fit(small_fk, bl.SgdConfig(steps=300, step_size=0.5))
    zero = np.zeros((small_fk[0].n, small_fk[0].d))
    before = np.mean([bl.spo_plus_loss(zero, s) for s in small_fk])
    after = np.mean([bl.spo_plus_loss(rep.theta_hat, s) for s in small_fk])
    assert after < before and rep.skipped == 0


def test_ols_converges_under_centred_scale_noise():
    theta = np.random.default_rng(0).normal(size=(4, 3))
    devs = {500: [], 5000: []}
    for j in range(8):
        for row in bl.ols_scale_consistency_probe(theta, bl.ScaleNoise(0.5, 0.5), [500, 5000], dg.rng_for(9, j)):
            devs[row["T"]].append(row["deviation"])
    assert np.median(devs[5000]) < 0.6 * np.median(devs[500])
