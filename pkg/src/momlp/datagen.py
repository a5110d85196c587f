"""Benchmark LP families (grid shortest path, fractional knapsack) and the
synthetic covariate/objective distributions used by the experiments."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .lp_core import (
    Basis,
    LPError,
    SolverOptions,
    StandardFormLP,
    reduced_costs,
    solve_lp,
)
from .margin import SupervisedSample, TrainingSample, sample_from_solution

MAX_ATTEMPTS = 100
# Training bases for degenerate families come from a perturbed right-hand side.
GEN_OPTIONS = SolverOptions(perturb=1e-7)


class GenerationError(RuntimeError):
    pass


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the stream addressed by (seed, *keys)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]))


# ---------------------------------------------------------------- shortest path

@dataclass(frozen=True)
class GridSpec:
    """k x k grid; edges go east or north, east edges (row-major) first."""

    k: int = 5

    @property
    def n_edges(self) -> int:
        return 2 * self.k * (self.k - 1)

    @property
    def n_nodes(self) -> int:
        return self.k * self.k

    def node(self, row: int, col: int) -> int:
        return row * self.k + col

    def edges(self) -> List[tuple]:
        k = self.k
        east = [(self.node(r, c), self.node(r, c + 1)) for r in range(k) for c in range(k - 1)]
        north = [(self.node(r, c), self.node(r + 1, c)) for r in range(k - 1) for c in range(k)]
        return east + north


def incidence_matrix(spec: GridSpec) -> np.ndarray:
    """Full node-arc incidence matrix (+1 at the tail, -1 at the head)."""
    M = np.zeros((spec.n_nodes, spec.n_edges))
    for e, (tail, head) in enumerate(spec.edges()):
        M[tail, e] = 1.0
        M[head, e] = -1.0
    return M


def build_grid_lp(spec: GridSpec, c) -> StandardFormLP:
    """Unit flow from the south-west to the north-east corner.

    The north-east balance row is dropped so that A has full row rank.
    """
    c = np.asarray(c, dtype=float)
    if c.shape != (spec.n_edges,):
        raise ValueError(f"expected {spec.n_edges} edge costs, got {c.shape}")
    A = incidence_matrix(spec)[:-1]
    b = np.zeros(spec.n_nodes - 1)
    b[spec.node(0, 0)] = 1.0
    return StandardFormLP(c, A, b)


# ---------------------------------------------------------------- knapsack

@dataclass(frozen=True)
class KnapsackSpec:
    n_items: int = 10
    d: int = 5
    price_mode: str = "integer-1-1000"
    # draw prices and budget once per dataset rather than per sample
    fixed_constraints: bool = True
    # scale b so the feasible region sits in the unit ball and ||z|| <= 1
    normalized: bool = False

    def __post_init__(self):
        if self.n_items < 1:
            raise ValueError("n_items must be >= 1")
        if self.price_mode not in ("integer-1-1000", "uniform-0-1"):
            raise ValueError(f"unknown price_mode {self.price_mode!r}")

    @property
    def n_vars(self) -> int:
        return 2 * self.n_items + 1


def build_knapsack_lp(p, budget: float, c, normalized: bool = False) -> StandardFormLP:
    """min c^T x  s.t.  p^T x + s1 = B,  x + s2 = 1,  x, s1, s2 >= 0.

    Variables are ordered (x_1..x_n, s1, s2_1..s2_n).  ``c`` may cover the
    items only (slacks get zero cost) or all 2n+1 variables.  With
    ``normalized`` the right-hand side is divided by sqrt(2n + B^2), which
    bounds every feasible point inside the unit ball.
    """
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    if np.any(p <= 0) or budget <= 0:
        raise ValueError("prices and budget must be positive")
    c = np.asarray(c, dtype=float)
    if c.shape == (n,):
        c = np.concatenate([c, np.zeros(n + 1)])
    elif c.shape != (2 * n + 1,):
        raise ValueError(f"c must have length {n} or {2 * n + 1}")
    A = np.zeros((n + 1, 2 * n + 1))
    A[0, :n] = p
    A[0, n] = 1.0
    A[1:, :n] = np.eye(n)
    A[1:, n + 1:] = np.eye(n)
    b = np.concatenate([[budget], np.ones(n)])
    if normalized:
        b = b / np.sqrt(2 * n + budget**2)
    return StandardFormLP(c, A, b)


def gen_prices(spec: KnapsackSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.price_mode == "integer-1-1000":
        return rng.integers(1, 1001, size=spec.n_items).astype(float)
    # a zero price would break the ratio order; uniform(0,1] in practice
    return 1.0 - rng.uniform(0.0, 1.0, size=spec.n_items)


def gen_budget(p, rng: np.random.Generator) -> float:
    """B ~ Unif[low, high], low = max p, high = sum p - u * low, u ~ Unif[0, 1].

    When high < low the interval collapses and B = low.
    """
    p = np.asarray(p, dtype=float)
    if p.size == 0:
        raise ValueError("empty price vector")
    low = float(p.max())
    u = rng.uniform()
    high = max(float(p.sum()) - u * low, low)
    return float(rng.uniform(low, high))


# ---------------------------------------------------------------- noise model

@dataclass(frozen=True)
class NoiseSpec:
    deg: int = 1
    eps_bar: float = 0.0
    alpha_bar: float = 0.0
    eta_bar: float = 0.0

    def __post_init__(self):
        if self.deg < 1:
            raise ValueError("deg must be >= 1")
        if min(self.eps_bar, self.alpha_bar, self.eta_bar) < 0:
            raise ValueError("noise levels must be non-negative")
        if self.eps_bar >= 1:
            raise ValueError("eps_bar must be < 1")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    V: np.ndarray

    @classmethod
    def draw(cls, n: int, d: int, rng: np.random.Generator) -> "GroundTruth":
        return cls(rng.binomial(1, 0.5, size=(n, d)).astype(float))


def _draw_noise(noise: NoiseSpec, z, n, rng):
    """Multiplicative, scale and additive noise.  Always consumes the same draws."""
    eps = rng.uniform(1.0 - noise.eps_bar, 1.0 + noise.eps_bar, size=n)
    eta = (rng.exponential(1.0, size=n) - 1.0) / 2.0
    alpha = 1.0 + noise.alpha_bar if z[0] > 0.5 else 1.0
    return eps, alpha, eta


def _is_unique(lp: StandardFormLP, basis: Basis, tol: float) -> bool:
    r = reduced_costs(lp.c, lp.A, basis)
    N = basis.complement_array()
    scale = max(1.0, float(np.abs(lp.c).max()))
    return bool(np.all(r[N] > tol * scale))


def _solve_sample(lp, z, c, meta, tol=1e-9, initial_basis=None):
    try:
        sol = solve_lp(lp, GEN_OPTIONS, initial_basis)
    except LPError:
        return None
    if not _is_unique(lp, sol.basis, tol):
        return None
    return sample_from_solution(lp, sol, z, c=lp.c if c is None else c, meta=meta)


def sp_objective(V, z, noise: NoiseSpec, rng) -> np.ndarray:
    d = V.shape[1]
    eps, alpha, eta = _draw_noise(noise, z, V.shape[0], rng)
    base = (V @ z / np.sqrt(d) + 3.0) ** noise.deg + 1.0
    return base * eps * alpha + noise.eta_bar * eta


def gen_sp_instance(
    V,
    noise: NoiseSpec,
    rng: np.random.Generator,
    grid: GridSpec = GridSpec(),
    meta: Optional[dict] = None,
    initial_basis=None,
) -> SupervisedSample:
    """Grid shortest-path sample with Gaussian covariates (last one fixed to 1).

    ``initial_basis`` (e.g. the basis of a previous sample on the same grid)
    only warm-starts the solver.
    """
    V = np.asarray(V, dtype=float)
    if V.shape[0] != grid.n_edges:
        raise ValueError(f"V has {V.shape[0]} rows, grid has {grid.n_edges} edges")
    d = V.shape[1]
    for attempt in range(MAX_ATTEMPTS):
        z = np.concatenate([rng.standard_normal(d - 1), [1.0]])
        c = sp_objective(V, z, noise, rng)
        info = {"family": "sp", "attempts": attempt + 1, **(meta or {})}
        sample = _solve_sample(build_grid_lp(grid, c), z, None, info, initial_basis=initial_basis)
        if sample is not None:
            return sample
    raise GenerationError("no nondegenerate shortest-path instance after 100 attempts")


def fk_utility(V, z, noise: NoiseSpec, rng) -> np.ndarray:
    eps, alpha, eta = _draw_noise(noise, z, V.shape[0], rng)
    return (V @ z) ** noise.deg * eps * alpha + noise.eta_bar * eta


def draw_fk_constraints(spec: KnapsackSpec, rng) -> tuple:
    p = gen_prices(spec, rng)
    return p, gen_budget(p, rng)


def _normalize_z(z):
    return z / max(1.0, float(np.linalg.norm(z)))


def gen_fk_instance(
    V,
    spec: KnapsackSpec,
    noise: NoiseSpec,
    rng: np.random.Generator,
    prices=None,
    budget: Optional[float] = None,
    meta: Optional[dict] = None,
    initial_basis=None,
) -> SupervisedSample:
    """Fractional knapsack sample; the LP minimises the negated utilities.

    The stored ``c`` is the LP objective, i.e. ``-utility`` on the items and
    zero on the slacks.  ``initial_basis`` only warm-starts the solver.
    """
    V = np.asarray(V, dtype=float)
    if V.shape != (spec.n_items, spec.d):
        raise ValueError(f"V must be {(spec.n_items, spec.d)}, got {V.shape}")
    for attempt in range(MAX_ATTEMPTS):
        if prices is None:
            p, B = draw_fk_constraints(spec, rng)
        else:
            p = np.asarray(prices, dtype=float)
            B = gen_budget(p, rng) if budget is None else float(budget)
        z = np.concatenate([rng.uniform(0.0, 1.0, spec.d - 1), [1.0]])
        if spec.normalized:
            z = _normalize_z(z)
        u = fk_utility(V, z, noise, rng)
        lp = build_knapsack_lp(p, B, -u, normalized=spec.normalized)
        info = {"family": "fk", "attempts": attempt + 1, **(meta or {})}
        sample = _solve_sample(lp, z, None, info, initial_basis=initial_basis)
        if sample is not None:
            return sample
    raise GenerationError("no nondegenerate knapsack instance after 100 attempts")


# ---------------------------------------------------------------- separable streams

@dataclass(eq=False)
class SeparableStream:
    samples: List[SupervisedSample]
    theta_star: np.ndarray
    sigma_bar: float
    margin: float
    rejected: int = 0

    @property
    def theta_bar(self) -> float:
        return float(np.linalg.norm(self.theta_star))

    @property
    def m(self) -> int:
        return self.samples[0].m

    @property
    def n(self) -> int:
        return self.samples[0].n

    def perceptron_bound(self) -> float:
        """Theta_bar^2 (1 + sigma_bar^2 m^2 n)."""
        return self.theta_bar**2 * (1.0 + self.sigma_bar**2 * self.m**2 * self.n)


def sample_margin(sample: TrainingSample, c, geometric: bool = False) -> float:
    """Smallest non-basic reduced cost of ``c``; divided by ||W_i||_F when ``geometric``."""
    N = sample.basis.complement_array()
    r = reduced_costs(c, sample.A, sample.basis)[N]
    if geometric:
        coef = sample.basis_inverse @ sample.A[:, N]
        r = r / (np.sqrt(1.0 + (coef**2).sum(axis=0)) * np.linalg.norm(sample.z))
    return float(r.min())


def gen_separable_instance(
    family: str,
    T: int,
    rng: np.random.Generator,
    margin_scale: float = 1.0,
    min_gap: float = 0.0,
    knapsack: KnapsackSpec = KnapsackSpec(price_mode="uniform-0-1", normalized=True),
    grid: GridSpec = GridSpec(k=3),
    d: Optional[int] = None,
    geometric: bool = False,
) -> SeparableStream:
    """A stream whose objectives are exactly c = Theta* z.

    Samples whose smallest non-basic reduced cost under Theta* falls below
    ``min_gap`` are rejected (and counted); with ``geometric`` the reduced
    costs are first divided by the norms of their feature matrices W_i.  When ``margin_scale > 0`` Theta*
    is rescaled so the smallest observed margin equals ``margin_scale``.
    Covariates are normalised to ||z|| <= 1.
    """
    if margin_scale < 0:
        raise ValueError("margin_scale must be >= 0")
    if family == "fk":
        d = d or knapsack.d
        V = GroundTruth.draw(knapsack.n_items, d, rng).V
        # an all-zero row gives an item of zero utility, tied in every sample
        while not V.any(axis=1).all():
            zero = ~V.any(axis=1)
            V[zero] = rng.binomial(1, 0.5, size=(int(zero.sum()), d))
        theta = np.zeros((knapsack.n_vars, d))
        theta[: knapsack.n_items] = -V
        p, B = draw_fk_constraints(knapsack, rng)

        def make(z):
            return build_knapsack_lp(p, B, theta @ z, normalized=knapsack.normalized)

        def draw_z():
            return _normalize_z(np.concatenate([rng.uniform(0.0, 1.0, d - 1), [1.0]]))
    elif family == "sp":
        d = d or 5
        theta = rng.uniform(0.5, 1.5, size=(grid.n_edges, d))

        def make(z):
            return build_grid_lp(grid, theta @ z)

        def draw_z():
            return _normalize_z(np.concatenate([rng.uniform(0.0, 1.0, d - 1), [1.0]]))
    else:
        raise ValueError(f"unknown family {family!r}")

    samples, margins, sigmas = [], [], []
    rejected = 0
    while len(samples) < T:
        if rejected > MAX_ATTEMPTS * max(T, 1):
            raise GenerationError("margin rejection rate too high")
        z = draw_z()
        lp = make(z)
        warm = samples[-1].basis.indices if samples else None
        s = _solve_sample(lp, z, None, {"family": family, "separable": True}, initial_basis=warm)
        if s is None:
            rejected += 1
            continue
        if sample_margin(s, lp.c, geometric) < min_gap:
            rejected += 1
            continue
        samples.append(s)
        margins.append(sample_margin(s, lp.c))
        sigmas.append(np.linalg.norm(s.basis_inverse, 2))

    margin = float(min(margins))
    if margin_scale > 0:
        scale = margin_scale / margin
        theta = theta * scale
        samples = [s.with_c(s.c * scale) for s in samples]
        margin = margin_scale
    return SeparableStream(samples, theta, float(max(sigmas)), margin, rejected)


# ---------------------------------------------------------------- JSON lines

def sample_to_record(sample: TrainingSample) -> dict:
    rec = {
        "z": sample.z.tolist(),
        "A": sample.A.tolist(),
        "b": sample.b.tolist(),
        "x_star": sample.x_star.tolist(),
        "basis": list(sample.basis.indices),
    }
    if isinstance(sample, SupervisedSample):
        if sample.c is not None:
            rec["c"] = sample.c.tolist()
        rec["meta"] = sample.meta
    else:
        rec["meta"] = {}
    return rec


def record_to_sample(rec: dict) -> SupervisedSample:
    A = np.asarray(rec["A"], dtype=float)
    basis = Basis(tuple(rec["basis"]), A.shape[1])
    return SupervisedSample(
        rec["x_star"], A, rec["b"], rec["z"], basis, c=rec.get("c"), meta=rec.get("meta", {})
    )


def write_dataset(samples: Sequence[TrainingSample], path) -> None:
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8") as fh:
            for s in samples:
                fh.write(json.dumps(sample_to_record(s), sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write dataset {path}: {exc}") from exc


def read_dataset(path) -> List[SupervisedSample]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return [record_to_sample(json.loads(line)) for line in fh if line.strip()]
