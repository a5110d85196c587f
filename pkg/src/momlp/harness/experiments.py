"""Offline and online experiment sweeps with validation-split tuning."""
from __future__ import annotations

import itertools
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .. import datagen as dg
from ..baselines import SgdConfig, ols_fit, ridge_fit, spo_plus_fit
from ..features import KernelSpec, KernelTransformer, kernelize_dataset
from ..lp_core import LPError, SolverOptions
from ..margin import decision_relative_loss, estimate_loss, prescribe, same_decision
from ..mom import MomFitConfig, NonConvergenceWarning, mom_fit
from ..online import (
    OnlineRunConfig,
    OnlineRunResult,
    ftrl_run,
    naive_subopt_ogd_run,
    ogd_run,
    perceptron_run,
    prop4_step_size,
)
from .config import OFFLINE_METHODS, ONLINE_METHODS, ExperimentConfig
from .results import ResultRow

# rng stream keys below (seed, trial)
KEY_TRUTH, KEY_TRAIN, KEY_TEST, KEY_TUNE = 0, 1, 2, 3


# ---------------------------------------------------------------- data

@dataclass
class TrialData:
    train: list
    test: list
    V: np.ndarray


def _stream(cfg: ExperimentConfig, V, rng, T, constraints):
    out = []
    for _ in range(T):
        warm = out[-1].basis.indices if out else None
        if cfg.family == "sp":
            s = dg.gen_sp_instance(V, cfg.noise, rng, cfg.grid, initial_basis=warm)
        else:
            p, B = constraints if constraints else (None, None)
            s = dg.gen_fk_instance(V, cfg.knapsack, cfg.noise, rng, prices=p, budget=B, initial_basis=warm)
        out.append(s)
    return out


def generate_trial(cfg: ExperimentConfig, trial: int) -> TrialData:
    """Training and test samples of one trial, each split from its own rng stream."""
    rng = dg.rng_for(cfg.seed, trial, KEY_TRUTH)
    if cfg.family == "sp":
        V = dg.GroundTruth.draw(cfg.grid.n_edges, cfg.d, rng).V
        constraints = None
    else:
        V = dg.GroundTruth.draw(cfg.knapsack.n_items, cfg.d, rng).V
        constraints = dg.draw_fk_constraints(cfg.knapsack, rng) if cfg.knapsack.fixed_constraints else None
    train = _stream(cfg, V, dg.rng_for(cfg.seed, trial, KEY_TRAIN), cfg.T_train, constraints)
    test = _stream(cfg, V, dg.rng_for(cfg.seed, trial, KEY_TEST), cfg.T_test, constraints)
    return TrialData(train, test, V)


# ---------------------------------------------------------------- prediction and scoring

class Predictor:
    """Linear objective model c_hat = Theta phi(z), phi the identity or a kernel map."""

    def __init__(self, theta, transform: Optional[KernelTransformer] = None, info: Optional[dict] = None):
        self.theta = np.asarray(theta, dtype=float)
        self.transform = transform
        self.info = info or {}

    def objectives(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        F = self.transform.transform(Z) if self.transform is not None else Z
        return F @ self.theta.T


def evaluate(pred: Predictor, samples: Sequence, family: str, opts: SolverOptions) -> Dict[str, float]:
    """Mean test metrics; a failed decision solve counts as a mismatch and is left out of the loss means."""
    C_hat = pred.objectives(np.stack([s.z for s in samples]))
    rel, lest, lsub = [], [], []
    mistakes = 0
    for s, c_hat in zip(samples, C_hat):
        try:
            x = prescribe(c_hat, s.A, s.b, opts)
        except LPError:
            mistakes += 1
            continue
        mistakes += not same_decision(x, s.x_star)
        lsub.append(float(c_hat @ (s.x_star - x)))
        if s.c is not None:
            rel.append(decision_relative_loss(family, s.c, x, s.x_star))
            lest.append(estimate_loss(s.c, x, s.x_star))
    T = len(samples)
    match = 1.0 - mistakes / T
    out = {
        f"rel-loss-{family}": _nanmean(rel),
        "l-est": _nanmean(lest),
        "l-sub": _nanmean(lsub),
        "match-rate": match,
        "mistakes": float(mistakes),
    }
    assert out["match-rate"] == 1.0 - out["mistakes"] / T
    return out


def _nanmean(v) -> float:
    v = np.asarray(v, dtype=float)
    v = v[~np.isnan(v)]
    return float(v.mean()) if v.size else float("nan")


# ---------------------------------------------------------------- fitting

def _mom_cfg(cfg: ExperimentConfig, lam: float) -> MomFitConfig:
    base = cfg.mom
    return MomFitConfig(
        lam=lam, radius=base.radius, max_iters=base.max_iters, tol_objective=base.tol_objective,
        step_schedule=base.step_schedule, solver=base.solver, seed=base.seed,
    )


def _mom(train, mcfg: MomFitConfig, rows=None):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonConvergenceWarning)
        rep = mom_fit(train, mcfg, rows=rows)
    return rep, not any(issubclass(w.category, NonConvergenceWarning) for w in caught)


def fit_method(method: str, hp: dict, train: Sequence, cfg: ExperimentConfig, seed: int = 0) -> Predictor:
    """Fit one offline method with hyperparameters ``hp`` on ``train``."""
    if method == "mom":
        rep, ok = _mom(train, _mom_cfg(cfg, hp.get("lam", 0.0)))
        return Predictor(rep.theta_hat.theta, info={"converged": ok})
    if method == "mom-kernel":
        spec = KernelSpec(**hp["kernel"])
        ktrain, tf = kernelize_dataset(train, spec)
        rep, ok = _mom(ktrain, _mom_cfg(cfg, hp.get("lam", 0.0)))
        return Predictor(rep.theta_hat.theta, tf, info={"converged": ok})
    if method == "ols":
        return Predictor(ols_fit(train).theta)
    if method == "ridge":
        return Predictor(ridge_fit(train, hp["lam"]).theta)
    if method == "spo-plus":
        sgd = SgdConfig(step_size=hp["step_size"], lam=hp.get("lam", 0.0), seed=seed)
        rep = spo_plus_fit(train, sgd, cfg.solver)
        return Predictor(rep.theta_hat.theta, info={"skipped": rep.skipped})
    raise ValueError(f"not an offline method: {method!r}")


# ---------------------------------------------------------------- tuning

_TIE_KEYS = ("lam", "step_size", "eta_mult", "radius_mult")


def grid_points(grid: dict) -> List[dict]:
    """Cartesian product of a {name: [values]} grid, in grid order."""
    if not grid:
        return [{}]
    keys = list(grid)
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def tune(
    method: str,
    grid: dict,
    train_split: Sequence,
    val_split: Sequence,
    cfg: Optional[ExperimentConfig] = None,
    score: Optional[Callable[[Predictor, Sequence], float]] = None,
) -> dict:
    """Exhaustive grid search by mean validation relative loss.

    Points with a NaN (or failed) loss are excluded; ties go to the smallest
    lambda, then the smallest step, then the earliest grid point.  When every
    point fails, the first grid point is returned.

    Args:
        method: offline method name.
        grid: {hyperparameter: [values]}.
        train_split: samples to fit on.
        val_split: samples to score on.
        cfg: experiment settings (family, solver, MOM tolerances).
        score: optional replacement for the validation criterion, lower is better.
    """
    points = grid_points(grid)
    if not points:
        raise ValueError("empty grid")
    if len(points) == 1:
        return points[0]
    cfg = cfg or ExperimentConfig()
    if score is None:
        def score(pred, val):
            return evaluate(pred, val, cfg.family, cfg.solver)[f"rel-loss-{cfg.family}"]
    scored = []
    for idx, hp in enumerate(points):
        try:
            loss = float(score(fit_method(method, hp, train_split, cfg), val_split))
        except (LPError, ArithmeticError, ValueError, np.linalg.LinAlgError):
            loss = float("nan")
        if math.isnan(loss):
            continue
        ties = tuple(float(hp[k]) if isinstance(hp.get(k), (int, float)) else 0.0 for k in _TIE_KEYS)
        scored.append((loss, ties, idx))
    if not scored:
        return points[0]
    return points[min(scored)[2]]


# ---------------------------------------------------------------- offline sweep

def _clock(cfg):
    return time.perf_counter() if cfg.timing else None


def _elapsed(cfg, t0):
    return None if t0 is None else 1000.0 * (time.perf_counter() - t0)


def _error_rows(trial, methods, metric, exc):
    msg = f"{type(exc).__name__}: {exc}"
    return [ResultRow(trial, m, metric, float("nan"), {"error": msg}) for m in methods]


def run_offline_trial(cfg: ExperimentConfig, trial: int) -> List[ResultRow]:
    """One trial: generate, tune each method on the validation split, refit, test."""
    methods = [m for m in cfg.methods if m in OFFLINE_METHODS]
    metric = f"rel-loss-{cfg.family}"
    try:
        data = generate_trial(cfg, trial)
    except (dg.GenerationError, LPError) as exc:
        return _error_rows(trial, methods, metric, exc)
    n_fit = cfg.T_train - cfg.n_val
    fit_part, val_part = data.train[:n_fit], data.train[n_fit:]
    rows = []
    for method in methods:
        t0 = _clock(cfg)
        try:
            hp = tune(method, cfg.grid_for(method), fit_part, val_part, cfg)
            pred = fit_method(method, hp, data.train, cfg, seed=cfg.seed + trial)
            scores = evaluate(pred, data.test, cfg.family, cfg.solver)
        except (LPError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            rows.extend(_error_rows(trial, [method], metric, exc))
            continue
        runtime = _elapsed(cfg, t0)
        hp = {**hp, **pred.info}
        for name in (metric, "l-est", "l-sub", "match-rate", "mistakes"):
            rows.append(ResultRow(trial, method, name, scores[name], hp, runtime))
    return rows


def _map_trials(fn, cfg, workers):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, [cfg] * cfg.trials, range(cfg.trials)))
    else:
        parts = [fn(cfg, t) for t in range(cfg.trials)]
    return [row for part in parts for row in part]


def run_offline_experiment(cfg: ExperimentConfig, workers: int = 1) -> List[ResultRow]:
    """Rows for every (trial, offline method, metric); failed trials give error rows."""
    return _map_trials(run_offline_trial, cfg, workers)


# ---------------------------------------------------------------- online sweep

def separable_stream(
    family: str,
    T: int,
    rng_keys: Sequence[int],
    knapsack: dg.KnapsackSpec = dg.KnapsackSpec(price_mode="uniform-0-1", normalized=True),
    grid: dg.GridSpec = dg.GridSpec(k=3),
    d: Optional[int] = None,
    quantile: float = 0.5,
    pilot: int = 300,
) -> dg.SeparableStream:
    """Separable stream whose minimum reduced-cost gap is a quantile of a pilot run.

    The pilot and the final stream start from the same generator state, so
    they share Theta* and the constraint data.
    """
    kw = dict(knapsack=knapsack, grid=grid, d=d)
    first = dg.gen_separable_instance(family, pilot, dg.rng_for(*rng_keys), margin_scale=0.0, **kw)
    gap = float(np.quantile([dg.sample_margin(s, s.c) for s in first.samples], quantile))
    return dg.gen_separable_instance(family, T, dg.rng_for(*rng_keys), min_gap=gap, **kw)


def sample_iterate(result: OnlineRunResult, rng: np.random.Generator) -> np.ndarray:
    """A uniformly drawn iterate Theta_t, t = 1..T (needs a recorded trajectory)."""
    if len(result.thetas) < 2:
        raise ValueError("run was not recorded with record_trajectory=True")
    return result.thetas[int(rng.integers(0, len(result.thetas) - 1))]


def _online_stream(cfg: ExperimentConfig, trial: int, key: int, T: int) -> dg.SeparableStream:
    on = cfg.online
    return separable_stream(
        cfg.family, T, (cfg.seed, trial, key), cfg.knapsack, cfg.grid, cfg.d,
        on.get("min_gap_quantile", 0.5), on.get("pilot", 300),
    )


def run_online_method(method: str, stream: dg.SeparableStream, hp: dict, record: bool = False) -> OnlineRunResult:
    samples = stream.samples
    T = len(samples)
    radius = hp.get("radius_mult", 1.0) * stream.theta_bar
    if method == "mom-ogd":
        eta = hp.get("eta_mult", 1.0) * prop4_step_size(stream.theta_bar, stream.sigma_bar, stream.n, stream.m, T)
        return ogd_run(samples, OnlineRunConfig(eta=eta, radius=radius, record_trajectory=record))
    if method == "naive-subopt-ogd":
        eta = hp.get("eta_mult", 1.0) * prop4_step_size(stream.theta_bar, stream.sigma_bar, stream.n, stream.m, T)
        cfg = OnlineRunConfig(eta=eta, radius=radius, algorithm="naive-subopt-ogd", record_trajectory=record)
        return naive_subopt_ogd_run(samples, cfg)
    if method == "mom-perceptron":
        return perceptron_run(samples, OnlineRunConfig(algorithm="perceptron", record_trajectory=record))
    if method == "mom-ftrl":
        return ftrl_run(samples, cfg=OnlineRunConfig(algorithm="ftrl", record_trajectory=record))
    raise ValueError(f"not an online method: {method!r}")


def tune_online(method: str, grid: dict, streams) -> dict:
    """Grid point with the best mean match rate over the final 20% of held-out tuning streams.

    Ties go to the earliest grid point.
    """
    if isinstance(streams, dg.SeparableStream):
        streams = [streams]
    points = grid_points(grid)
    if len(points) == 1:
        return points[0]

    def score(hp):
        return float(np.mean([
            run_online_method(method, st, hp).match_rate(int(0.8 * len(st.samples))) for st in streams
        ]))

    best = max(range(len(points)), key=lambda j: (score(points[j]), -j))
    return points[best]


def run_online_trial(cfg: ExperimentConfig, trial: int) -> List[ResultRow]:
    methods = [m for m in cfg.methods if m in ONLINE_METHODS]
    checkpoints = sorted(set(cfg.online.get("checkpoints", [])) | {cfg.T_train})
    try:
        stream = _online_stream(cfg, trial, KEY_TRAIN, cfg.T_train)
        tuning = None
    except (dg.GenerationError, LPError) as exc:
        return _error_rows(trial, methods, "cum-regret", exc)
    rows = []
    for method in methods:
        t0 = _clock(cfg)
        try:
            grid = cfg.grid_for(method)
            if len(grid_points(grid)) > 1 and tuning is None:
                tuning = _online_stream(cfg, trial, KEY_TUNE, cfg.T_train)
            hp = tune_online(method, grid, tuning) if tuning is not None else grid_points(grid)[0]
            res = run_online_method(method, stream, hp)
        except (LPError, ArithmeticError, ValueError, dg.GenerationError) as exc:
            rows.extend(_error_rows(trial, [method], "cum-regret", exc))
            continue
        runtime = _elapsed(cfg, t0)
        for t in checkpoints:
            if t > res.T:
                continue
            at = {**hp, "t": t}
            rows.append(ResultRow(trial, method, "cum-regret", res.cumulative_regret[t - 1], at, runtime))
            rows.append(ResultRow(trial, method, "mistakes", res.mistakes(t), at, runtime))
        start = int(0.8 * res.T)
        rows.append(ResultRow(trial, method, "match-rate", res.match_rate(start), {**hp, "from": start}, runtime))
    return rows


def run_online_experiment(cfg: ExperimentConfig, workers: int = 1) -> List[ResultRow]:
    """Cumulative regret and mistake counts at the configured checkpoints on separable streams."""
    return _map_trials(run_online_trial, cfg, workers)


def values_by_trial(rows: Sequence[ResultRow], method: str, metric: str) -> Dict[int, float]:
    """{trial: value} for one method and metric (error rows give NaN)."""
    return {r.trial: r.value for r in rows if r.method == method and r.metric == metric}
