"""Inverse-LP samples, the margin-violation loss and decision-quality losses."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .lp_core import (
    DECISION_OPTIONS,
    DEFAULT_TOL,
    Basis,
    DegenerateLP,
    SolverOptions,
    StandardFormLP,
    _Factor,
    extract_basis,
    reduced_costs,
    solve_lp,
)


@dataclass(frozen=True, eq=False)
class TrainingSample:
    """One inverse-LP observation (x*, A, b, z, B*, N*).

    ``basis_inverse`` (A_{B*}^{-1}) is computed on construction when omitted.
    For degenerate programs (e.g. shortest paths) x* has fewer than m positive
    entries and ``basis`` is the nondegenerate basis found by perturbation; it
    must still reproduce x* as its basic solution.
    """

    x_star: np.ndarray
    A: np.ndarray
    b: np.ndarray
    z: np.ndarray
    basis: Basis
    basis_inverse: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("x_star", "A", "b", "z"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        m, n = self.A.shape
        if self.x_star.shape != (n,) or self.b.shape != (m,) or self.z.ndim != 1:
            raise ValueError("inconsistent sample dimensions")
        if self.basis.size != m or self.basis.n != n:
            raise ValueError(f"basis of size {self.basis.size} does not fit A of shape {self.A.shape}")
        if self.basis_inverse is None:
            idx = self.basis.as_array()
            _Factor(self.A[:, idx])
            inv = np.linalg.inv(self.A[:, idx])
            inv.setflags(write=False)
            object.__setattr__(self, "basis_inverse", inv)
        scale = max(1.0, float(np.abs(self.b).max()))
        if np.abs(self.A @ self.x_star - self.b).max() > 1e-7 * scale:
            raise ValueError("A x* != b")
        if np.any(self.x_star[self.basis.complement_array()] != 0.0):
            raise ValueError("x* is nonzero off the basis")

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.z.shape[0]

    def lp(self, c) -> StandardFormLP:
        return StandardFormLP(c, self.A, self.b)

    def with_z(self, z) -> "TrainingSample":
        return TrainingSample(self.x_star, self.A, self.b, z, self.basis, self.basis_inverse)


@dataclass(frozen=True, eq=False)
class SupervisedSample(TrainingSample):
    """A TrainingSample that also carries the observed objective ``c``."""

    c: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        super().__post_init__()
        if self.c is not None:
            c = np.array(self.c, dtype=float)
            if c.shape != (self.n,):
                raise ValueError("c has the wrong length")
            c.setflags(write=False)
            object.__setattr__(self, "c", c)

    def with_z(self, z) -> "SupervisedSample":
        return SupervisedSample(
            self.x_star, self.A, self.b, z, self.basis, self.basis_inverse, self.c, self.meta
        )

    def with_c(self, c) -> "SupervisedSample":
        return SupervisedSample(
            self.x_star, self.A, self.b, self.z, self.basis, self.basis_inverse, c, self.meta
        )


def sample_from_solution(lp: StandardFormLP, solution, z, c=None, meta=None, tol=DEFAULT_TOL):
    """Build a sample from a solved LP, checking the basis against x* when nondegenerate."""
    if np.count_nonzero(solution.x > tol) == lp.m:
        if extract_basis(solution.x, lp.m, tol) != solution.basis:
            raise DegenerateLP("solver basis disagrees with the support of x*")
    cls_kwargs = dict(basis_inverse=solution.basis_inverse)
    if c is None and meta is None:
        return TrainingSample(solution.x, lp.A, lp.b, z, solution.basis, **cls_kwargs)
    return SupervisedSample(
        solution.x, lp.A, lp.b, z, solution.basis, c=c, meta=dict(meta or {}), **cls_kwargs
    )


@dataclass
class ParameterMatrix:
    """Linear predictor c_hat = theta @ z, optionally confined to a Frobenius ball."""

    theta: np.ndarray
    radius: float = 0.0

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=float)
        if self.theta.ndim != 2:
            raise ValueError("theta must be an n x d matrix")
        if self.radius < 0:
            raise ValueError("radius must be >= 0")

    @classmethod
    def zeros(cls, n: int, d: int, radius: float = 0.0) -> "ParameterMatrix":
        return cls(np.zeros((n, d)), radius)

    def projected(self) -> "ParameterMatrix":
        return ParameterMatrix(project_frobenius(self.theta, self.radius), self.radius)


def project_frobenius(theta: np.ndarray, radius: float) -> np.ndarray:
    """Theta * min(1, radius / ||Theta||_F); radius 0 means unconstrained."""
    if radius <= 0:
        return theta
    norm = np.linalg.norm(theta)
    if norm <= radius:
        return theta
    return theta * (radius / norm)


def _theta(theta) -> np.ndarray:
    return theta.theta if isinstance(theta, ParameterMatrix) else np.asarray(theta, dtype=float)


def predict_objective(theta, z) -> np.ndarray:
    th = _theta(theta)
    z = np.asarray(z, dtype=float)
    if th.shape[1] != z.shape[0]:
        raise ValueError(f"theta has {th.shape[1]} columns but z has length {z.shape[0]}")
    return th @ z


def predicted_reduced_costs(sample: TrainingSample, theta) -> np.ndarray:
    return reduced_costs(predict_objective(theta, sample.z), sample.A, sample.basis)


def margin_violation(sample: TrainingSample, theta) -> float:
    """Sum over non-basic i of (1 - r_hat_i)_+ for r_hat the reduced costs of theta @ z."""
    r = predicted_reduced_costs(sample, theta)
    return float(np.maximum(1.0 - r[sample.basis.complement_array()], 0.0).sum())


def margin_subgradient(sample: TrainingSample, theta) -> np.ndarray:
    """A subgradient of :func:`margin_violation` with respect to theta (n x d).

    Hinges exactly at the kink contribute nothing.
    """
    th = _theta(theta)
    z = sample.z
    r = predicted_reduced_costs(sample, th)
    N = sample.basis.complement_array()
    active = N[(1.0 - r[N]) > 0.0]
    G = np.zeros_like(th)
    if active.size == 0:
        return G
    G[active] -= z
    coef = sample.basis_inverse @ sample.A[:, active]
    G[sample.basis.as_array()] += np.outer(coef.sum(axis=1), z)
    return G


def prescribe(c_hat, A, b, opts: SolverOptions = DECISION_OPTIONS):
    """Optimal decision for LP(c_hat, A, b)."""
    return solve_lp(StandardFormLP(c_hat, A, b), opts).x


def suboptimality_loss(sample: TrainingSample, theta, opts: SolverOptions = DECISION_OPTIONS) -> float:
    """c_hat^T x* - c_hat^T x_hat with x_hat optimal for the predicted objective."""
    c_hat = predict_objective(theta, sample.z)
    x_hat = prescribe(c_hat, sample.A, sample.b, opts)
    return float(c_hat @ (sample.x_star - x_hat))


def estimate_loss(c_true, x_pred, x_star) -> float:
    return float(np.dot(c_true, np.asarray(x_pred) - np.asarray(x_star)))


def relative_loss_sp(c_true, x_pred, x_star) -> float:
    """c^T (x - x*) / c^T x*."""
    denom = float(np.dot(c_true, x_star))
    if denom == 0.0:
        raise ZeroDivisionError("c^T x* is zero")
    return estimate_loss(c_true, x_pred, x_star) / denom


def relative_loss_fk(c_true, x_pred, x_star) -> float:
    """c^T (x* - x) / ||c||_2, with c read as a utility vector."""
    norm = float(np.linalg.norm(c_true))
    if norm == 0.0:
        raise ZeroDivisionError("||c|| is zero")
    return float(np.dot(c_true, np.asarray(x_star) - np.asarray(x_pred))) / norm


def decision_relative_loss(family: str, c_lp, x_pred, x_star) -> float:
    """Relative loss of a decision for a benchmark family.

    Knapsack programs minimise negated utilities, so the utility vector passed
    to :func:`relative_loss_fk` is ``-c_lp``.  Returns NaN when undefined.
    """
    try:
        if family == "sp":
            return relative_loss_sp(c_lp, x_pred, x_star)
        if family == "fk":
            return relative_loss_fk(-np.asarray(c_lp), x_pred, x_star)
    except ZeroDivisionError:
        return float("nan")
    raise ValueError(f"unknown family {family!r}")


def same_decision(x_pred, x_star, tol: float = 1e-6) -> bool:
    return bool(np.max(np.abs(np.asarray(x_pred) - np.asarray(x_star))) <= tol)


class MarginRows:
    """Stacked reduced-cost rows of a dataset, for vectorised loss evaluation.

    Row k belongs to sample ``t[k]`` and non-basic coordinate ``i[k]``; its
    predicted reduced cost is ``c_hat[i] + coef[k] @ c_hat[basic[k]]`` with
    ``coef = -(A_B^{-1} A_i)``.  Equivalently r_k = <W_k, Theta> where
    ``W_k = (e_i + sum_j coef_kj e_{basic_kj}) z_t^T``.
    """

    def __init__(self, samples: Sequence[TrainingSample]):
        if not samples:
            raise ValueError("empty dataset")
        n, m, d = samples[0].n, samples[0].m, samples[0].d
        t_idx, i_idx, basic, coef = [], [], [], []
        for t, s in enumerate(samples):
            if (s.n, s.m, s.d) != (n, m, d):
                raise ValueError(f"sample {t} has dimensions {(s.n, s.m, s.d)}, expected {(n, m, d)}")
            N = s.basis.complement_array()
            B = s.basis.as_array()
            t_idx.append(np.full(N.size, t))
            i_idx.append(N)
            basic.append(np.broadcast_to(B, (N.size, m)))
            coef.append(-(s.basis_inverse @ s.A[:, N]).T)
        self.n, self.m, self.d = n, m, d
        self.T = len(samples)
        self.t = np.concatenate(t_idx).astype(np.int64)
        self.i = np.concatenate(i_idx).astype(np.int64)
        self.basic = np.ascontiguousarray(np.concatenate(basic), dtype=np.int64)
        self.coef = np.ascontiguousarray(np.concatenate(coef))
        self.Z = np.ascontiguousarray(np.stack([s.z for s in samples]))

    @property
    def K(self) -> int:
        return self.t.shape[0]

    def prefix(self, T: int) -> "MarginRows":
        """Rows of the first ``T`` samples, sharing memory with ``self``."""
        if not 1 <= T <= self.T:
            raise ValueError(f"prefix length {T} outside [1, {self.T}]")
        K = int(np.searchsorted(self.t, T))
        out = object.__new__(MarginRows)
        out.n, out.m, out.d, out.T = self.n, self.m, self.d, T
        out.t, out.i = self.t[:K], self.i[:K]
        out.basic, out.coef = self.basic[:K], self.coef[:K]
        out.Z = self.Z[:T]
        return out

    def reduced_costs(self, theta: np.ndarray) -> np.ndarray:
        U = self.Z @ theta.T  # (T, n) predicted objectives
        return U[self.t, self.i] + np.einsum("km,km->k", self.coef, U[self.t[:, None], self.basic])

    def row_norms_sq(self) -> np.ndarray:
        """||W_k||_F^2."""
        return (1.0 + (self.coef**2).sum(axis=1)) * (self.Z[self.t] ** 2).sum(axis=1)

    def losses(self, theta: np.ndarray) -> np.ndarray:
        """Per-sample margin violation, shape (T,)."""
        h = np.maximum(1.0 - self.reduced_costs(theta), 0.0)
        return np.bincount(self.t, weights=h, minlength=self.T)

    def mean_loss(self, theta: np.ndarray) -> float:
        return float(np.maximum(1.0 - self.reduced_costs(theta), 0.0).sum() / self.T)

    def accumulate(self, weights: np.ndarray) -> np.ndarray:
        """sum_k weights[k] * W_k as an (n, d) matrix."""
        Zw = self.Z[self.t] * weights[:, None]
        G = np.zeros((self.n, self.d))
        np.add.at(G, self.i, Zw)
        np.add.at(G, self.basic.ravel(), (self.coef[:, :, None] * Zw[:, None, :]).reshape(-1, self.d))
        return G

    def mean_subgradient(self, theta: np.ndarray) -> np.ndarray:
        active = (1.0 - self.reduced_costs(theta)) > 0.0
        return -self.accumulate(active.astype(float)) / self.T
