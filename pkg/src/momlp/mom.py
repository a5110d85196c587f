"""Offline maximum optimality margin estimation and prescription.

The estimator minimises

    F(Theta) = lambda/2 ||Theta||_F^2 + (1/T) sum_t sum_{i in N_t} (1 - r_hat_{t,i})_+

over ``||Theta||_F <= radius`` (radius 0: unconstrained).  Each reduced cost
r_hat_{t,i} = <W_{t,i}, Theta> is linear in Theta, so F is a linear hinge-loss
SVM without bias over the matrices W_{t,i}.  Two solvers are provided:

* ``"dual-cd"`` (default): dual coordinate descent with an explicit duality
  gap as stopping certificate; the ball constraint is handled by raising
  lambda until the norm bound is met.
* ``"subgradient"``: projected full-batch subgradient descent with step
  eta_0/sqrt(k) and uniform iterate averaging.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from numba import njit

from .lp_core import DECISION_OPTIONS, SolverOptions, solve_lp, StandardFormLP
from .margin import MarginRows, ParameterMatrix, TrainingSample, predict_objective, project_frobenius


class NonConvergenceWarning(UserWarning):
    pass


@dataclass
class MomFitConfig:
    lam: float = 0.0  # 0 selects 1/sqrt(T)
    radius: float = 0.0
    max_iters: int = 20000
    tol_objective: float = 1e-6
    step_schedule: str = "inverse-sqrt"
    solver: str = "dual-cd"
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be > 0 (or 0 for the 1/sqrt(T) default)")
        if self.radius < 0:
            raise ValueError("radius must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.solver not in ("dual-cd", "subgradient"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.step_schedule not in ("inverse-sqrt", "polyak-style"):
            raise ValueError(f"unknown step schedule {self.step_schedule!r}")

    def lambda_for(self, T: int) -> float:
        return self.lam if self.lam > 0 else 1.0 / np.sqrt(T)


@dataclass
class MomFitReport:
    theta_hat: ParameterMatrix
    final_objective: float
    iterations_used: int
    converged: bool
    lam: float = 0.0
    duality_gap: float = float("nan")
    objective_trace: List[float] = field(default_factory=list)
    dual_state: Optional["DualState"] = None


def mom_objective(rows: MarginRows, theta: np.ndarray, lam: float) -> float:
    return 0.5 * lam * float(np.sum(theta * theta)) + rows.mean_loss(theta)


# ---------------------------------------------------------------- dual coordinate descent

@njit(cache=True)
def _dcd_epoch(t, i, basic, coef, Z, qdiag, perm, alpha, theta, lam, C):
    d = Z.shape[1]
    m = basic.shape[1]
    for kk in range(perm.shape[0]):
        k = perm[kk]
        q = qdiag[k]
        if q <= 0.0:
            continue
        tt = t[k]
        ii = i[k]
        r = 0.0
        for j in range(d):
            r += theta[ii, j] * Z[tt, j]
        for l in range(m):
            cl = coef[k, l]
            if cl != 0.0:
                bl = basic[k, l]
                s = 0.0
                for j in range(d):
                    s += theta[bl, j] * Z[tt, j]
                r += cl * s
        a_old = alpha[k]
        a_new = a_old - (r - 1.0) * lam / q
        if a_new < 0.0:
            a_new = 0.0
        elif a_new > C:
            a_new = C
        delta = (a_new - a_old) / lam
        if delta != 0.0:
            alpha[k] = a_new
            for j in range(d):
                theta[ii, j] += delta * Z[tt, j]
            for l in range(m):
                cl = coef[k, l]
                if cl != 0.0:
                    bl = basic[k, l]
                    for j in range(d):
                        theta[bl, j] += delta * cl * Z[tt, j]


class DualState:
    """Dual variables of the margin SVM; reusable as a warm start."""

    def __init__(self, rows: MarginRows, alpha: Optional[np.ndarray] = None):
        self.rows = rows
        self.alpha = np.zeros(rows.K) if alpha is None else np.asarray(alpha, dtype=float).copy()
        if self.alpha.shape != (rows.K,):
            raise ValueError("warm-start alpha has the wrong length")

    def grow(self, rows: MarginRows) -> "DualState":
        """Warm start for a dataset that extends the current one."""
        alpha = np.zeros(rows.K)
        alpha[: self.alpha.size] = self.alpha
        return DualState(rows, alpha)


def _dcd_solve(rows: MarginRows, lam: float, state: DualState, cfg: MomFitConfig, rng):
    C = 1.0 / rows.T
    qdiag = rows.row_norms_sq()
    # cap at C: warm starts may come from a shorter prefix with a larger C
    np.minimum(state.alpha, C, out=state.alpha)
    theta = rows.accumulate(state.alpha) / lam
    gap = np.inf
    primal = np.inf
    epochs = 0
    converged = False
    check_every = 2
    for epochs in range(1, cfg.max_iters + 1):
        perm = rng.permutation(rows.K)
        _dcd_epoch(rows.t, rows.i, rows.basic, rows.coef, rows.Z, qdiag, perm, state.alpha, theta, lam, C)
        if epochs % check_every == 0 or epochs == cfg.max_iters:
            sq = float(np.sum(theta * theta))
            primal = 0.5 * lam * sq + rows.mean_loss(theta)
            dual = float(state.alpha.sum()) - 0.5 * lam * sq
            gap = primal - dual
            if gap <= cfg.tol_objective * max(primal, 1e-12):
                converged = True
                break
            check_every = min(check_every * 2, 16)
    return theta, primal, gap, epochs, converged


def _fit_dual_cd(rows, lam, cfg, state=None):
    rng = np.random.default_rng(cfg.seed)
    state = state if state is not None else DualState(rows)
    theta, primal, gap, epochs, converged = _dcd_solve(rows, lam, state, cfg, rng)
    total = epochs
    lam_used = lam
    R = cfg.radius
    if R > 0 and np.linalg.norm(theta) > R:
        # ||Theta(lam')|| decreases in lam'; find lam' with norm == R
        lo, hi = lam, lam
        while True:
            hi *= 4.0
            theta, primal, gap, epochs, converged = _dcd_solve(rows, hi, state, cfg, rng)
            total += epochs
            if np.linalg.norm(theta) <= R:
                break
        best = (hi, theta.copy(), gap, converged, state.alpha.copy())
        for _ in range(40):
            mid = np.sqrt(lo * hi)
            theta, primal, gap, epochs, converged = _dcd_solve(rows, mid, state, cfg, rng)
            total += epochs
            if np.linalg.norm(theta) <= R:
                hi = mid
                best = (mid, theta.copy(), gap, converged, state.alpha.copy())
            else:
                lo = mid
            if hi / lo - 1.0 < 1e-6:
                break
        lam_used, theta, gap, converged, alpha = best
        state.alpha[:] = alpha
        theta = project_frobenius(theta, R)
    objective = mom_objective(rows, theta, lam)
    return theta, objective, total, converged, gap, lam_used, state


# ---------------------------------------------------------------- projected subgradient

def lipschitz_estimate(samples: Sequence[TrainingSample]) -> float:
    """(2 + sqrt(m) sigma_hat) max ||z||, sigma_hat the largest ||A_B^{-1}||_2."""
    sigma = max(np.linalg.norm(s.basis_inverse, 2) for s in samples)
    zmax = max(np.linalg.norm(s.z) for s in samples)
    m = samples[0].m
    return (2.0 + np.sqrt(m) * sigma) * zmax


def _fit_subgradient(rows, samples, lam, cfg):
    R = cfg.radius
    eta0 = 1.0 / (lam + lipschitz_estimate(samples))
    theta = np.zeros((rows.n, rows.d))
    avg = np.zeros_like(theta)
    best_theta = avg.copy()
    best = mom_objective(rows, avg, lam)
    trace = [best]  # best value so far, non-increasing
    f_avgs = [best]
    window = 50
    converged = False
    k = 0
    for k in range(1, cfg.max_iters + 1):
        f_k = mom_objective(rows, theta, lam)
        if f_k < best:
            best, best_theta = f_k, theta.copy()
        g = lam * theta + rows.mean_subgradient(theta)
        if cfg.step_schedule == "polyak-style":
            # Polyak step towards the best value so far, lowered by the default step
            gn = float(np.sum(g * g))
            step = (f_k - best + eta0 / np.sqrt(k)) / gn if gn > 0 else 0.0
        else:
            step = eta0 / np.sqrt(k)
        theta = project_frobenius(theta - step * g, R)
        avg += (theta - avg) / k
        f_avg = mom_objective(rows, avg, lam)
        if f_avg < best:
            best, best_theta = f_avg, avg.copy()
        trace.append(best)
        f_avgs.append(f_avg)
        if k >= window:
            change = abs(f_avgs[-window - 1] - f_avg)
            if change <= cfg.tol_objective * max(abs(f_avg), 1e-12):
                converged = True
                break
    return best_theta, best, k, converged, trace


# ---------------------------------------------------------------- public API

def _check_dataset(dataset):
    if not dataset:
        raise ValueError("empty dataset")
    n, d = dataset[0].n, dataset[0].d
    for t, s in enumerate(dataset):
        if s.n != n or s.d != d:
            raise ValueError(f"sample {t} has (n, d) = {(s.n, s.d)}, expected {(n, d)}")


def mom_fit(
    dataset: Sequence[TrainingSample],
    cfg: MomFitConfig = MomFitConfig(),
    rows: Optional[MarginRows] = None,
    warm_start: Optional[DualState] = None,
) -> MomFitReport:
    """Fit Theta_hat by maximum optimality margin.

    Only (x*, A, b, z, B*, N*) of each sample are used; objective vectors
    attached to supervised samples are never read.

    Args:
        dataset: training samples sharing n and d.
        cfg: regularisation, ball radius and solver settings.
        rows: precomputed :class:`MarginRows` for ``dataset`` (optional).
        warm_start: dual state from a previous fit on a prefix of ``dataset``
            (dual-cd only).

    Returns:
        MomFitReport; ``converged`` is False when the tolerance was not met
        within ``max_iters``.
    """
    _check_dataset(dataset)
    rows = rows if rows is not None else MarginRows(dataset)
    lam = cfg.lambda_for(len(dataset))
    if cfg.solver == "dual-cd":
        state = warm_start.grow(rows) if warm_start is not None else None
        theta, obj, iters, converged, gap, lam_used, state = _fit_dual_cd(rows, lam, cfg, state)
        report = MomFitReport(
            ParameterMatrix(theta, cfg.radius), obj, iters, converged, lam, gap, dual_state=state
        )
    else:
        theta, obj, iters, converged, trace = _fit_subgradient(rows, dataset, lam, cfg)
        report = MomFitReport(
            ParameterMatrix(theta, cfg.radius), obj, iters, converged, lam, objective_trace=trace
        )
    if not converged:
        warnings.warn(
            f"margin fit stopped after {iters} iterations without reaching tolerance {cfg.tol_objective}",
            NonConvergenceWarning,
        )
    return report


def mom_prescribe(theta_hat, A, b, z, opts: SolverOptions = DECISION_OPTIONS):
    """Predict c_hat = Theta_hat z and return (c_hat, x_hat) with x_hat optimal for it."""
    c_hat = predict_objective(theta_hat, z)
    sol = solve_lp(StandardFormLP(c_hat, A, b), opts)
    return c_hat, sol.x
