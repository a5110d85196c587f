"""Online learners driven by observed optimal solutions.

All runners start from Theta_1 = 0 and, at step t, first prescribe
x_t = argmin LP(Theta_t z_t, A_t, b_t) and only then learn from (x*_t, B*_t).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .lp_core import DECISION_OPTIONS, LPError, SolverOptions
from .margin import (
    MarginRows,
    SupervisedSample,
    TrainingSample,
    decision_relative_loss,
    margin_subgradient,
    margin_violation,
    predict_objective,
    prescribe,
    project_frobenius,
    same_decision,
)
from .mom import MomFitConfig, mom_fit

ALGORITHMS = ("ogd", "perceptron", "ftrl", "naive-subopt-ogd")


@dataclass
class OnlineRunConfig:
    eta: float = 0.0
    radius: float = 0.0
    algorithm: str = "ogd"
    record_trajectory: bool = False
    solver: SolverOptions = DECISION_OPTIONS

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm in ("ogd", "naive-subopt-ogd") and self.eta <= 0:
            raise ValueError("eta must be > 0")
        if self.algorithm == "ogd" and self.radius <= 0:
            raise ValueError("radius must be > 0 for ogd")
        if self.radius < 0:
            raise ValueError("radius must be >= 0")


@dataclass
class OnlineRunResult:
    """Trajectory of an online run.

    ``cumulative_regret`` accumulates the relative loss of x_t under the true
    objective when samples carry one, and the suboptimality loss
    c_hat_t^T (x*_t - x_t) otherwise.  Both increments are non-negative.
    """

    decisions: List[Optional[np.ndarray]] = field(default_factory=list)
    thetas: List[np.ndarray] = field(default_factory=list)
    per_step_margin_loss: List[float] = field(default_factory=list)
    per_step_relative_loss: List[float] = field(default_factory=list)
    per_step_subopt_loss: List[float] = field(default_factory=list)
    mistake_flags: List[bool] = field(default_factory=list)
    cumulative_regret: List[float] = field(default_factory=list)
    skipped: int = 0
    updates: int = 0
    theta_norms: List[float] = field(default_factory=list)

    @property
    def T(self) -> int:
        return len(self.decisions)

    @property
    def final_theta(self) -> np.ndarray:
        return self.thetas[-1]

    def mistakes(self, upto: Optional[int] = None) -> int:
        return int(np.sum(self.mistake_flags[:upto]))

    def match_rate(self, start: int = 0) -> float:
        flags = self.mistake_flags[start:]
        return 1.0 - float(np.mean(flags)) if flags else float("nan")


def prop4_step_size(theta_bar: float, sigma_bar: float, n: int, m: int, T: int) -> float:
    """2 Theta_bar / ((sqrt(n) + sigma_bar m n) sqrt(T))."""
    return 2.0 * theta_bar / ((np.sqrt(n) + sigma_bar * m * n) * np.sqrt(T))


class _Recorder:
    def __init__(self, record_trajectory: bool):
        self.res = OnlineRunResult()
        self.record = record_trajectory
        self._regret = 0.0

    def start(self, theta):
        self.res.theta_norms.append(float(np.linalg.norm(theta)))
        if self.record:
            self.res.thetas.append(theta.copy())

    def decide(self, sample: TrainingSample, theta, opts: SolverOptions):
        """Prescribe with the current parameter and log decision quality."""
        res = self.res
        c_hat = predict_objective(theta, sample.z)
        try:
            x = prescribe(c_hat, sample.A, sample.b, opts)
        except LPError:
            x = None
        res.decisions.append(x)
        res.per_step_margin_loss.append(margin_violation(sample, theta))
        c_true = sample.c if isinstance(sample, SupervisedSample) else None
        if x is None:
            res.skipped += 1
            res.mistake_flags.append(True)
            res.per_step_relative_loss.append(float("nan"))
            res.per_step_subopt_loss.append(float("nan"))
            res.cumulative_regret.append(self._regret)
            return None
        res.mistake_flags.append(not same_decision(x, sample.x_star))
        sub = float(c_hat @ (sample.x_star - x))
        res.per_step_subopt_loss.append(sub)
        if c_true is not None:
            family = sample.meta.get("family", "sp")
            rel = decision_relative_loss(family, c_true, x, sample.x_star)
            res.per_step_relative_loss.append(rel)
            if not np.isnan(rel):
                self._regret += rel
        else:
            res.per_step_relative_loss.append(float("nan"))
            self._regret += sub
        res.cumulative_regret.append(self._regret)
        return x

    def after(self, theta):
        self.res.theta_norms.append(float(np.linalg.norm(theta)))
        if self.record:
            self.res.thetas.append(theta.copy())


def _check_stream(dataset):
    if not dataset:
        raise ValueError("empty stream")
    n, d = dataset[0].n, dataset[0].d
    for t, s in enumerate(dataset):
        if (s.n, s.d) != (n, d):
            raise ValueError(f"sample {t} has (n, d) = {(s.n, s.d)}, expected {(n, d)}")
    return n, d


def _run(dataset, cfg: OnlineRunConfig, update):
    n, d = _check_stream(dataset)
    theta = np.zeros((n, d))
    rec = _Recorder(cfg.record_trajectory)
    rec.start(theta)
    for t, s in enumerate(dataset):
        x = rec.decide(s, theta, cfg.solver)
        theta = update(t, s, theta, x)
        rec.after(theta)
    if not cfg.record_trajectory:
        rec.res.thetas = [theta.copy()]
    return rec.res


def ogd_run(dataset: Sequence[TrainingSample], cfg: OnlineRunConfig) -> OnlineRunResult:
    """Online gradient descent on the margin-violation loss with Frobenius-ball projection.

    A failed decision solve is logged as a mistake; the parameter update never
    needs the decision and always happens.
    """
    if cfg.algorithm != "ogd":
        raise ValueError("ogd_run needs algorithm='ogd'")

    def update(t, s, theta, x):
        return project_frobenius(theta - cfg.eta * margin_subgradient(s, theta), cfg.radius)

    return _run(dataset, cfg, update)


def naive_subopt_ogd_run(dataset: Sequence[TrainingSample], cfg: OnlineRunConfig) -> OnlineRunResult:
    """OGD on the suboptimality loss with gradient (x*_t - x_t) z_t^T.

    Diagnostic only: zero is a trivial minimiser, and the iterates drift there.
    """
    if cfg.algorithm != "naive-subopt-ogd":
        raise ValueError("naive_subopt_ogd_run needs algorithm='naive-subopt-ogd'")

    def update(t, s, theta, x):
        if x is None:
            return theta
        return project_frobenius(theta - cfg.eta * np.outer(s.x_star - x, s.z), cfg.radius)

    return _run(dataset, cfg, update)


def perceptron_run(
    dataset: Sequence[TrainingSample],
    cfg: Optional[OnlineRunConfig] = None,
    threshold: float = 0.5,
) -> OnlineRunResult:
    """Perceptron over non-basic reduced costs.

    Coordinates i in N*_t are visited in increasing order; whenever the reduced
    cost of i under the working parameter is <= ``threshold``, row i gains z_t
    and the basic rows lose (A_B^{-1} A_i) z_t^T, which raises that reduced
    cost by (1 + ||A_B^{-1} A_i||^2) ||z_t||^2.
    """
    cfg = cfg or OnlineRunConfig(algorithm="perceptron")
    counter = {"updates": 0}

    def update(t, s, theta, x):
        theta = theta.copy()
        B = s.basis.as_array()
        for i in s.basis.complement_array():
            c_hat = theta @ s.z
            coef = s.basis_inverse @ s.A[:, i]
            r_i = c_hat[i] - coef @ c_hat[B]
            if r_i <= threshold:
                theta[i] += s.z
                theta[B] -= np.outer(coef, s.z)
                counter["updates"] += 1
        return theta

    res = _run(dataset, cfg, update)
    res.updates = counter["updates"]
    return res


def ftrl_run(
    dataset: Sequence[TrainingSample],
    radius: float = 0.0,
    cfg: Optional[OnlineRunConfig] = None,
    fit: Optional[MomFitConfig] = None,
) -> OnlineRunResult:
    """Follow the regularised leader: Theta_{t+1} is the margin fit on the first t samples with lambda = 1/sqrt(t).

    Each refit is warm-started from the previous dual solution.
    """
    cfg = cfg or OnlineRunConfig(algorithm="ftrl", radius=radius)
    fit = fit or MomFitConfig(radius=radius, tol_objective=1e-4)
    _check_stream(dataset)
    rows = MarginRows(dataset)
    state = {"dual": None}

    def update(t, s, theta, x):
        prefix = rows.prefix(t + 1)
        step_cfg = MomFitConfig(
            lam=1.0 / np.sqrt(t + 1), radius=fit.radius, max_iters=fit.max_iters,
            tol_objective=fit.tol_objective, solver="dual-cd", seed=fit.seed,
        )
        report = mom_fit(dataset[: t + 1], step_cfg, rows=prefix, warm_start=state["dual"])
        state["dual"] = report.dual_state
        return report.theta_hat.theta

    return _run(dataset, cfg, update)
