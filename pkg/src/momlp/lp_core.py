"""Standard-form linear programs, a two-phase revised simplex solver and the
reduced-cost machinery used by the optimality-margin learners.

All LPs are of the form ``min c^T x  s.t.  A x = b, x >= 0``.
"""
from __future__ import annotations

import enum
import hashlib
import itertools
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

DEFAULT_TOL = 1e-9


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    DEGENERATE = "degenerate"
    ITERATION_LIMIT = "iteration-limit"


class LPError(Exception):
    """Raised when a solve does not end in a nondegenerate optimum."""

    status = SolveStatus.DEGENERATE

    def __init__(self, detail: str = "", solution: Optional["LPSolution"] = None):
        super().__init__(f"{self.status.value}: {detail}" if detail else self.status.value)
        self.detail = detail
        # set for degenerate optima so callers that only need *an* optimal vertex can use it
        self.solution = solution


class InfeasibleLP(LPError):
    status = SolveStatus.INFEASIBLE


class UnboundedLP(LPError):
    status = SolveStatus.UNBOUNDED


class DegenerateLP(LPError):
    status = SolveStatus.DEGENERATE


class PivotLimitReached(LPError):
    status = SolveStatus.ITERATION_LIMIT


def _frozen(arr, ndim, name):
    out = np.array(arr, dtype=float)
    if out.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class StandardFormLP:
    """The triple (c, A, b) of ``min c^T x s.t. Ax = b, x >= 0``."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", _frozen(self.c, 1, "c"))
        object.__setattr__(self, "A", _frozen(self.A, 2, "A"))
        object.__setattr__(self, "b", _frozen(self.b, 1, "b"))
        m, n = self.A.shape
        if m < 1 or n < m:
            raise ValueError(f"need m >= 1 and n >= m, got A of shape {self.A.shape}")
        if self.c.shape[0] != n or self.b.shape[0] != m:
            raise ValueError(
                f"inconsistent dimensions: c {self.c.shape}, A {self.A.shape}, b {self.b.shape}"
            )

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def with_objective(self, c) -> "StandardFormLP":
        return StandardFormLP(c, self.A, self.b)


@dataclass(frozen=True)
class Basis:
    """Basic column indices (sorted ascending) and their complement."""

    indices: tuple
    n: int

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.indices))
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate basis indices {idx}")
        if idx and (idx[0] < 0 or idx[-1] >= self.n):
            raise ValueError(f"basis indices {idx} out of range for n={self.n}")
        object.__setattr__(self, "indices", idx)

    @property
    def complement(self) -> tuple:
        basic = set(self.indices)
        return tuple(i for i in range(self.n) if i not in basic)

    @property
    def size(self) -> int:
        return len(self.indices)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.intp)

    def complement_array(self) -> np.ndarray:
        return np.asarray(self.complement, dtype=np.intp)


@dataclass(frozen=True, eq=False)
class LPSolution:
    x: np.ndarray
    basis: Basis
    basis_inverse: np.ndarray
    dual_price: np.ndarray
    objective: float
    pivots: int = 0
    perturbed: bool = False


@dataclass(frozen=True)
class SolverOptions:
    """Knobs for :func:`solve_lp`.

    ``perturb`` is the width of the uniform right-hand-side perturbation used
    to break degeneracy (``None`` disables it).  ``allow_degenerate`` returns
    a degenerate optimal vertex instead of raising.
    """

    tol: float = DEFAULT_TOL
    max_pivots: Optional[int] = None
    perturb: Optional[float] = None
    perturb_seed: int = 0
    perturb_retries: int = 5
    allow_degenerate: bool = False

    def pivot_limit(self, m: int, n: int) -> int:
        if self.max_pivots is not None:
            return self.max_pivots
        return max(10 * n * m, 50)


DEFAULT_OPTIONS = SolverOptions()
# Decisions only need *an* optimal vertex; degeneracy is harmless there.
DECISION_OPTIONS = SolverOptions(allow_degenerate=True)


class _Factor:
    """Dense LU of a basis matrix A_B, rebuilt from scratch on every pivot."""

    def __init__(self, A_B: np.ndarray):
        self.lu = lu_factor(A_B, check_finite=False)
        diag = np.abs(np.diag(self.lu[0]))
        if diag.size and diag.min() <= 1e-11 * max(1.0, diag.max()):
            raise DegenerateLP("singular basis matrix")

    def solve(self, rhs):
        return lu_solve(self.lu, rhs, check_finite=False)

    def solve_t(self, rhs):
        return lu_solve(self.lu, rhs, trans=1, check_finite=False)


def _simplex(A, b, c, basis, tol, limit):
    """Bland-rule revised simplex from a feasible basis (list aligned with rows).

    Returns ``(basis, pivots)``; raises UnboundedLP / PivotLimitReached.
    """
    basis = list(basis)
    for pivots in range(limit + 1):
        fac = _Factor(A[:, basis])
        x_B = fac.solve(b)
        y = fac.solve_t(c[basis])
        r = c - A.T @ y
        r[basis] = 0.0
        entering = np.flatnonzero(r < -tol)
        if entering.size == 0:
            return basis, pivots
        if pivots == limit:
            break
        q = int(entering[0])
        d = fac.solve(A[:, q])
        pos = d > tol
        if not pos.any():
            raise UnboundedLP(f"column {q} has no positive ratio")
        ratios = np.full(d.shape, np.inf)
        ratios[pos] = np.maximum(x_B[pos], 0.0) / d[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol)
        leave = min(ties, key=lambda p: basis[p])
        basis[leave] = q
    raise PivotLimitReached(f"more than {limit} pivots")


def _phase_one(A, b, tol, limit):
    """Find a feasible basis of {Ax=b, x>=0} with artificial variables."""
    m, n = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    A1 = np.hstack([A * sign[:, None], np.eye(m)])
    b1 = b * sign
    cost = np.concatenate([np.zeros(n), np.ones(m)])
    basis, pivots = _simplex(A1, b1, cost, list(range(n, n + m)), tol, limit)
    fac = _Factor(A1[:, basis])
    x_B = fac.solve(b1)
    infeas = float(sum(x_B[p] for p, j in enumerate(basis) if j >= n))
    if infeas > tol * max(1.0, float(np.abs(b).sum())):
        raise InfeasibleLP(f"phase-1 optimum {infeas:.3e} > 0")
    # drive remaining (zero-level) artificials out of the basis
    for p in range(m):
        if basis[p] < n:
            continue
        fac = _Factor(A1[:, basis])
        row = fac.solve_t(np.eye(m)[p]) @ A1[:, :n]
        in_basis = set(basis)
        cand = [j for j in range(n) if j not in in_basis and abs(row[j]) > 1e-7]
        if not cand:
            raise DegenerateLP("constraint matrix is not of full row rank")
        basis[p] = cand[0]
        pivots += 1
    return basis, pivots


def _finish(A, b, c, basis, tol, pivots, perturbed=False) -> LPSolution:
    n = A.shape[1]
    B = Basis(basis, n)
    idx = B.as_array()
    A_B = A[:, idx]
    _Factor(A_B)
    inv = np.linalg.inv(A_B)
    x = np.zeros(n)
    x_B = inv @ b
    x_B[(x_B < 0) & (x_B >= -max(tol, 1e-7))] = 0.0
    x[idx] = x_B
    dual = inv.T @ c[idx]
    for arr in (x, inv, dual):
        arr.setflags(write=False)
    return LPSolution(x, B, inv, dual, float(c @ x), pivots, perturbed)


_PHASE_ONE_CACHE: "OrderedDict[bytes, tuple]" = OrderedDict()
_PHASE_ONE_CACHE_SIZE = 64


def _cached_phase_one(A, b, tol, limit):
    """Phase 1 memoised on (A, b, tol): experiments solve many programs sharing A and b.

    Phase 1 is deterministic, so cached and fresh results are identical.
    """
    key = hashlib.sha1(A.tobytes() + b.tobytes() + repr((A.shape, tol)).encode()).digest()
    hit = _PHASE_ONE_CACHE.get(key)
    if hit is not None:
        _PHASE_ONE_CACHE.move_to_end(key)
        return list(hit[0]), hit[1]
    basis, pivots = _phase_one(A, b, tol, limit)
    _PHASE_ONE_CACHE[key] = (tuple(basis), pivots)
    if len(_PHASE_ONE_CACHE) > _PHASE_ONE_CACHE_SIZE:
        _PHASE_ONE_CACHE.popitem(last=False)
    return basis, pivots


def _is_feasible_basis(A, b, basis, tol):
    try:
        fac = _Factor(A[:, list(basis)])
    except DegenerateLP:
        return False
    return bool(np.all(fac.solve(b) >= -tol))


def solve_lp(
    lp: StandardFormLP,
    opts: SolverOptions = DEFAULT_OPTIONS,
    initial_basis: Optional[Sequence[int]] = None,
) -> LPSolution:
    """Solve ``lp`` with two-phase revised simplex under Bland's rule.

    Args:
        lp: the standard-form program.
        opts: tolerances, pivot limit and degeneracy policy.
        initial_basis: optional feasible basis; phase 1 is skipped when it is
            feasible for ``lp``.

    Returns:
        LPSolution with sorted basis, its inverse and the dual price.

    Raises:
        InfeasibleLP, UnboundedLP, DegenerateLP, PivotLimitReached.
    """
    A, b, c = lp.A, lp.b, lp.c
    m, n = A.shape
    tol = opts.tol
    limit = opts.pivot_limit(m, n)

    pivots = 0
    if initial_basis is not None and len(initial_basis) == m and _is_feasible_basis(A, b, initial_basis, tol):
        basis = list(initial_basis)
    else:
        basis, pivots = _cached_phase_one(A, b, tol, limit)
    basis, p2 = _simplex(A, b, c, basis, tol, limit)
    sol = _finish(A, b, c, basis, tol, pivots + p2)

    n_pos = int(np.count_nonzero(sol.x > tol))
    if n_pos == m:
        return sol
    if opts.perturb is None:
        if opts.allow_degenerate:
            return sol
        raise DegenerateLP(f"{n_pos} strictly positive components, expected {m}", solution=sol)
    return _solve_perturbed(lp, opts, sol, initial_basis)


def _solve_perturbed(lp, opts, degenerate_sol, initial_basis=None):
    A, b, c = lp.A, lp.b, lp.c
    m, n = A.shape
    tol = opts.tol
    limit = opts.pivot_limit(m, n)
    rng = np.random.default_rng(opts.perturb_seed)
    for _ in range(opts.perturb_retries):
        b_pert = b + opts.perturb * rng.uniform(0.0, 1.0, size=m)
        try:
            if initial_basis is not None and _is_feasible_basis(A, b_pert, initial_basis, tol):
                basis, p1 = list(initial_basis), 0
            else:
                basis, p1 = _phase_one(A, b_pert, tol, limit)
            basis, p2 = _simplex(A, b_pert, c, basis, tol, limit)
        except (InfeasibleLP, DegenerateLP):
            continue
        pert = _finish(A, b_pert, c, basis, tol, p1 + p2, perturbed=True)
        if np.count_nonzero(pert.x > tol) != m:
            continue
        # same basis, original right-hand side
        sol = _finish(A, b, c, list(pert.basis.indices), tol, pert.pivots, perturbed=True)
        if np.all(sol.x >= 0.0):
            return sol
    if opts.allow_degenerate:
        return degenerate_sol
    raise DegenerateLP("perturbation did not yield a nondegenerate basis", solution=degenerate_sol)


def extract_basis(x, m: int, tol: float = DEFAULT_TOL) -> Basis:
    """Basis ``{i : x_i > tol}``; raises DegenerateLP unless it has exactly m elements."""
    x = np.asarray(x, dtype=float)
    if np.any(x < -tol):
        raise ValueError("x has components below -tol")
    idx = np.flatnonzero(x > tol)
    if idx.size != m:
        raise DegenerateLP(f"|B| = {idx.size} != m = {m}")
    return Basis(tuple(idx), x.shape[0])


def reduced_costs(c, A, basis: Basis) -> np.ndarray:
    """r = c - A^T (A_B^{-1})^T c_B, with r_B set to exactly zero."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    idx = basis.as_array()
    y = _Factor(A[:, idx]).solve_t(c[idx])
    r = c - A.T @ y
    r[idx] = 0.0
    return r


def check_optimality(c, A, basis: Basis, tol: float = DEFAULT_TOL) -> bool:
    r = reduced_costs(c, A, basis)
    return bool(np.all(r[basis.complement_array()] >= -tol))


def basic_solution(lp: StandardFormLP, basis: Basis) -> np.ndarray:
    idx = basis.as_array()
    x = np.zeros(lp.n)
    x[idx] = _Factor(lp.A[:, idx]).solve(lp.b)
    return x


def suboptimality_bound(lp: StandardFormLP, basis: Basis, x_star) -> float:
    """Upper bound ``max_i x*_i * sum_{i in N} (-r_i)_+`` on c^T x_B - c^T x*."""
    r = reduced_costs(lp.c, lp.A, basis)
    neg = np.maximum(-r[basis.complement_array()], 0.0)
    return float(np.max(x_star) * neg.sum())


def vertex_enumeration_oracle(lp: StandardFormLP, tol: float = DEFAULT_TOL) -> LPSolution:
    """Brute-force optimum over all C(n, m) bases.  Test oracle only."""
    m, n = lp.A.shape
    if n > 10:
        raise ValueError(f"vertex enumeration is limited to n <= 10, got n={n}")
    best = None
    for combo in itertools.combinations(range(n), m):
        A_B = lp.A[:, combo]
        if abs(np.linalg.det(A_B)) < 1e-12:
            continue
        x_B = np.linalg.solve(A_B, lp.b)
        if np.any(x_B < -tol):
            continue
        obj = float(lp.c[list(combo)] @ x_B)
        if best is None or obj < best[0] - 1e-12:
            best = (obj, combo)
    if best is None:
        raise InfeasibleLP("no feasible basis")
    return _finish(lp.A, lp.b, lp.c, list(best[1]), tol, 0)


def feasible_bases(lp: StandardFormLP, tol: float = DEFAULT_TOL):
    """Yield every feasible Basis of ``lp`` (small n only)."""
    m, n = lp.A.shape
    for combo in itertools.combinations(range(n), m):
        A_B = lp.A[:, combo]
        if abs(np.linalg.det(A_B)) < 1e-12:
            continue
        if np.all(np.linalg.solve(A_B, lp.b) >= -tol):
            yield Basis(combo, n)
