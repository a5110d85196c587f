"""Predict-then-optimise baselines that learn from observed objectives c_t.

Least squares, ridge regression and SPO+ (stochastic subgradient on the
SPO+ surrogate).  Unlike the margin method these all consume ``sample.c``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .lp_core import DECISION_OPTIONS, LPError, SolverOptions, StandardFormLP, solve_lp
from .margin import ParameterMatrix, SupervisedSample


def _design(data: Sequence[SupervisedSample]):
    if not data:
        raise ValueError("empty dataset")
    if any(s.c is None for s in data):
        raise ValueError("baselines need samples with an observed objective c")
    Z = np.stack([s.z for s in data])
    C = np.stack([s.c for s in data])
    return Z, C


def least_squares(Z, C, allow_pinv: bool = True) -> np.ndarray:
    """Theta = (C^T Z)(Z^T Z)^{-1} for covariates Z (T x d) and targets C (T x n).

    A singular Gram matrix falls back to the pseudo-inverse (minimum-norm
    solution) with a warning, or raises when ``allow_pinv`` is False.
    """
    G = Z.T @ Z
    M = C.T @ Z
    if np.linalg.matrix_rank(G) < G.shape[0]:
        if not allow_pinv:
            raise np.linalg.LinAlgError("singular covariate Gram matrix")
        warnings.warn("singular covariate Gram matrix, using the pseudo-inverse", RuntimeWarning)
        return M @ np.linalg.pinv(G)
    return np.linalg.solve(G, M.T).T


def ols_fit(data: Sequence[SupervisedSample], allow_pinv: bool = True) -> ParameterMatrix:
    """Least squares fit of c on z; see :func:`least_squares`."""
    Z, C = _design(data)
    return ParameterMatrix(least_squares(Z, C, allow_pinv))


def ridge_fit(data: Sequence[SupervisedSample], lam: float) -> ParameterMatrix:
    """Ridge Theta = (sum c z^T)(sum z z^T + T lam I)^{-1}.

    ``lam`` weighs the per-sample averaged loss, hence the factor T.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if lam == 0:
        return ols_fit(data)
    Z, C = _design(data)
    T, d = Z.shape
    G = Z.T @ Z + T * lam * np.eye(d)
    return ParameterMatrix(np.linalg.solve(G, (C.T @ Z).T).T)


# ---------------------------------------------------------------- SPO+

def _solve(c, sample, opts):
    # B* is feasible for the sample's constraints and close to optimal near a good Theta
    return solve_lp(StandardFormLP(c, sample.A, sample.b), opts, sample.basis.indices).x


def spo_plus_loss(theta, sample: SupervisedSample, opts: SolverOptions = DECISION_OPTIONS) -> float:
    """(2 Theta z - c)^T x*(c) - min_x (2 Theta z - c)^T x, which is >= 0."""
    th = theta.theta if isinstance(theta, ParameterMatrix) else np.asarray(theta, dtype=float)
    w = 2.0 * (th @ sample.z) - sample.c
    x_tilde = _solve(w, sample, opts)
    return float(w @ sample.x_star - w @ x_tilde)


def spo_plus_subgradient(theta, sample: SupervisedSample, opts: SolverOptions = DECISION_OPTIONS) -> np.ndarray:
    """2 (x*(c) - x_tilde) z^T with x_tilde minimising (2 Theta z - c)^T x."""
    th = theta.theta if isinstance(theta, ParameterMatrix) else np.asarray(theta, dtype=float)
    w = 2.0 * (th @ sample.z) - sample.c
    x_tilde = _solve(w, sample, opts)
    return 2.0 * np.outer(sample.x_star - x_tilde, sample.z)


@dataclass
class SgdConfig:
    steps: int = 2000
    batch_size: int = 5
    step_size: float = 0.01
    lam: float = 0.0  # Frobenius regulariser (lam/2)||Theta||^2
    decay: bool = True  # step_size / sqrt(k)
    seed: int = 0


@dataclass
class SpoPlusReport:
    theta_hat: ParameterMatrix
    skipped: int
    steps: int


def spo_plus_fit(
    data: Sequence[SupervisedSample],
    cfg: SgdConfig = SgdConfig(),
    opts: SolverOptions = DECISION_OPTIONS,
) -> SpoPlusReport:
    """Mini-batch stochastic subgradient descent on the SPO+ loss.

    Batches are drawn with replacement from a seeded generator.  A sample whose
    inner LP fails is dropped from its batch and counted in ``skipped``.
    """
    _design(data)
    n, d = data[0].n, data[0].d
    rng = np.random.default_rng(cfg.seed)
    theta = np.zeros((n, d))
    skipped = 0
    for k in range(1, cfg.steps + 1):
        batch = rng.integers(0, len(data), size=cfg.batch_size)
        g = np.zeros_like(theta)
        used = 0
        for j in batch:
            try:
                g += spo_plus_subgradient(theta, data[j], opts)
                used += 1
            except LPError:
                skipped += 1
        if used:
            g /= used
        g += cfg.lam * theta
        eta = cfg.step_size / np.sqrt(k) if cfg.decay else cfg.step_size
        theta = theta - eta * g
    return SpoPlusReport(ParameterMatrix(theta), skipped, cfg.steps)


# ---------------------------------------------------------------- scale consistency

@dataclass(frozen=True)
class ScaleNoise:
    """Scale noise alpha ~ Uniform(mean - half_width, mean + half_width), independent of z."""

    mean: float = 0.0
    half_width: float = 0.5

    def draw(self, rng, size):
        return rng.uniform(self.mean - self.half_width, self.mean + self.half_width, size=size)


def ols_scale_consistency_probe(
    theta_star,
    noise: ScaleNoise,
    T_list: Sequence[int],
    rng: np.random.Generator,
    z_noise: float = 0.1,
) -> List[dict]:
    """Distance of the OLS estimate from (1 + E[alpha]) Theta* for growing T.

    Data: z ~ N(0, I), c = (1 + alpha) (Theta* z + e) with e ~ N(0, z_noise^2 I)
    and alpha drawn independently per sample.  Each T uses fresh data.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    n, d = theta_star.shape
    target = (1.0 + noise.mean) * theta_star
    rows = []
    for T in T_list:
        Z = rng.standard_normal((T, d))
        alpha = noise.draw(rng, T)
        C = (1.0 + alpha)[:, None] * (Z @ theta_star.T + z_noise * rng.standard_normal((T, n)))
        theta = least_squares(Z, C)
        rows.append({"T": int(T), "deviation": float(np.linalg.norm(theta - target))})
    return rows
