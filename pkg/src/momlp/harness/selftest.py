"""Acceptance checks.

Each check returns a :class:`CheckResult`; :func:`run_selftest` runs them in
order and writes one JSON line per check.  The file holds only seeded
quantities, so two runs with the same seed give identical bytes; wall-clock
times are reported on the side.
"""
from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .. import datagen as dg
from ..baselines import ScaleNoise, ols_fit, ols_scale_consistency_probe, spo_plus_loss, spo_plus_subgradient
from ..features import KernelSpec, gram_matrix
from ..lp_core import (
    DECISION_OPTIONS,
    StandardFormLP,
    basic_solution,
    check_optimality,
    feasible_bases,
    reduced_costs,
    solve_lp,
    suboptimality_bound,
    vertex_enumeration_oracle,
)
from ..margin import margin_subgradient, margin_violation, predicted_reduced_costs, suboptimality_loss
from ..mom import MomFitConfig, NonConvergenceWarning, mom_fit
from ..online import perceptron_run
from .config import ExperimentConfig, config_from_dict
from .experiments import (
    evaluate,
    fit_method,
    run_offline_experiment,
    run_online_method,
    separable_stream,
    tune,
    tune_online,
    values_by_trial,
)


@dataclass
class CheckResult:
    criterion: int
    name: str
    passed: bool
    values: Dict[str, object] = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.criterion:2d} [{status}] {self.name} ({self.seconds:.1f}s)"

    def record(self) -> str:
        rec = {"criterion": self.criterion, "name": self.name, "passed": self.passed, "values": self.values}
        return json.dumps(rec, sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serialisable: {type(x)}")


# ---------------------------------------------------------------- random programs

def random_nondegenerate_lp(rng: np.random.Generator, n_max: int = 8, m_max: int = 4) -> StandardFormLP:
    """Feasible, bounded LP with a unique nondegenerate optimum (n <= n_max, m <= m_max).

    b = A x0 with x0 > 0 makes the program feasible and c = A^T y + s with
    s > 0 keeps it bounded.  Draws are repeated until the brute-force optimum
    has m positive entries and strictly positive non-basic reduced costs.
    """
    while True:
        m = int(rng.integers(1, m_max + 1))
        n = int(rng.integers(m + 1, n_max + 1))
        A = rng.standard_normal((m, n))
        b = A @ rng.uniform(0.1, 1.0, n)
        c = A.T @ rng.standard_normal(m) + rng.uniform(0.1, 2.0, n)
        lp = StandardFormLP(c, A, b)
        try:
            sol = vertex_enumeration_oracle(lp)
        except Exception:
            continue
        r = reduced_costs(lp.c, lp.A, sol.basis)[sol.basis.complement_array()]
        conds = [np.linalg.cond(A[:, list(B.indices)]) for B in feasible_bases(lp)]
        if np.count_nonzero(sol.x > 1e-7) == m and r.min() > 1e-7 and max(conds) < 1e8:
            return lp


def _lps(seed: int, count: int = 200) -> List[StandardFormLP]:
    rng = dg.rng_for(seed, 101)
    return [random_nondegenerate_lp(rng) for _ in range(count)]


# ---------------------------------------------------------------- criteria 1-5, 7

def check_lp_oracle(seed: int) -> CheckResult:
    lps = _lps(seed)
    t0 = time.perf_counter()
    worst, basis_mismatch, errors = 0.0, 0, 0
    for lp in lps:
        try:
            sol = solve_lp(lp)
        except Exception:
            errors += 1
            continue
        ref = vertex_enumeration_oracle(lp)
        worst = max(worst, abs(sol.objective - ref.objective))
        basis_mismatch += sol.basis.indices != ref.basis.indices
    elapsed = time.perf_counter() - t0
    ok = errors == 0 and basis_mismatch == 0 and worst <= 1e-8 and elapsed < 10.0
    return CheckResult(1, "LP solver matches vertex enumeration", ok, {
        "lps": len(lps), "max_objective_gap": worst, "basis_mismatches": basis_mismatch, "errors": errors,
        "under_10s": elapsed < 10.0,
    })


def check_optimality_condition(seed: int) -> CheckResult:
    wrong, errors, bases = 0, 0, 0
    for lp in _lps(seed):
        try:
            best = vertex_enumeration_oracle(lp).basis
            for B in feasible_bases(lp):
                bases += 1
                wrong += check_optimality(lp.c, lp.A, B) != (B.indices == best.indices)
        except Exception:
            errors += 1
    return CheckResult(2, "reduced-cost test accepts exactly the optimal basis", wrong == 0 and errors == 0, {
        "feasible_bases": bases, "misclassified": wrong, "errors": errors,
    })


def check_suboptimality_bound(seed: int) -> CheckResult:
    violations, errors, bases = 0, 0, 0
    worst = -np.inf
    for lp in _lps(seed):
        try:
            x_star = vertex_enumeration_oracle(lp).x
            for B in feasible_bases(lp):
                bases += 1
                gap = float(lp.c @ basic_solution(lp, B) - lp.c @ x_star)
                slack = gap - suboptimality_bound(lp, B, x_star)
                worst = max(worst, slack)
                violations += slack > 1e-8
        except Exception:
            errors += 1
    return CheckResult(3, "suboptimality bound dominates the basis gap", violations == 0 and errors == 0, {
        "feasible_bases": bases, "violations": violations, "max_gap_minus_bound": worst, "errors": errors,
    })


def _small_knapsack_samples(seed: int, key: int, count: int, normalized: bool = False):
    ks = dg.KnapsackSpec(n_items=4, d=3, price_mode="uniform-0-1", normalized=normalized)
    rng = dg.rng_for(seed, key)
    V = dg.GroundTruth.draw(ks.n_items, ks.d, rng).V
    noise = dg.NoiseSpec(deg=1, eta_bar=1.0)
    return [dg.gen_fk_instance(V, ks, noise, rng) for _ in range(count)]


def _fd_gradient(f, theta, h):
    g = np.zeros_like(theta)
    for idx in np.ndindex(theta.shape):
        e = np.zeros_like(theta)
        e[idx] = h
        g[idx] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def _rel_err(g, ref):
    return float(np.linalg.norm(g - ref) / max(np.linalg.norm(ref), 1e-8))


def check_subgradients(seed: int) -> CheckResult:
    h = 1e-6
    samples = _small_knapsack_samples(seed, 102, 400)
    rng = dg.rng_for(seed, 103)
    n, d = samples[0].n, samples[0].d
    worst_margin, worst_spo = 0.0, 0.0
    done_margin = done_spo = 0
    for s in samples:
        if done_margin >= 100 and done_spo >= 100:
            break
        theta = rng.normal(0.0, 3.0, (n, d))
        if done_margin < 100:
            r = predicted_reduced_costs(s, theta)[s.basis.complement_array()]
            if np.abs(1.0 - r).min() > 1e-3:  # away from the hinge kinks
                fd = _fd_gradient(lambda th: margin_violation(s, th), theta, h)
                worst_margin = max(worst_margin, _rel_err(fd, margin_subgradient(s, theta)))
                done_margin += 1
        if done_spo < 100:
            w = 2.0 * theta @ s.z - s.c
            sol = solve_lp(StandardFormLP(w, s.A, s.b), DECISION_OPTIONS)
            r = reduced_costs(w, s.A, sol.basis)[sol.basis.complement_array()]
            if r.min() > 1e-3 * max(1.0, np.abs(w).max()):  # unique inner minimiser
                fd = _fd_gradient(lambda th: spo_plus_loss(th, s), theta, h)
                worst_spo = max(worst_spo, _rel_err(fd, spo_plus_subgradient(theta, s)))
                done_spo += 1
    ok = done_margin == 100 and done_spo == 100 and worst_margin <= 1e-4 and worst_spo <= 1e-4
    return CheckResult(4, "subgradients match central differences", ok, {
        "margin_points": done_margin, "spo_points": done_spo,
        "max_rel_err_margin": worst_margin, "max_rel_err_spo": worst_spo,
    })


def check_scale_invariance(seed: int) -> CheckResult:
    changed = 0
    for lp in _lps(seed)[:50]:
        base = solve_lp(lp).basis.indices
        for a in (0.5, 3.0, 100.0):
            changed += solve_lp(lp.with_objective(a * lp.c)).basis.indices != base
    ks = dg.KnapsackSpec(price_mode="uniform-0-1")
    rng = dg.rng_for(seed, 104)
    V = dg.GroundTruth.draw(ks.n_items, ks.d, rng).V
    data = [dg.gen_fk_instance(V, ks, dg.NoiseSpec(deg=2, eps_bar=0.3, eta_bar=0.5), rng) for _ in range(100)]
    scales = rng.uniform(0.1, 10.0, len(data))
    scaled = [s.with_c(s.c * a) for s, a in zip(data, scales)]
    cfg = MomFitConfig(lam=0.01, tol_objective=1e-6)
    mom_same = bool(np.array_equal(mom_fit(data, cfg).theta_hat.theta, mom_fit(scaled, cfg).theta_hat.theta))
    ols_changed = not np.allclose(ols_fit(data).theta, ols_fit(scaled).theta)
    ok = changed == 0 and mom_same and ols_changed
    return CheckResult(5, "scale invariance of LP and margin fit", ok, {
        "basis_changes": changed, "mom_bit_identical": mom_same, "ols_changed": bool(ols_changed),
    })


def check_prop3_inequality(seed: int) -> CheckResult:
    ks = dg.KnapsackSpec(price_mode="uniform-0-1", normalized=True)
    rng = dg.rng_for(seed, 105)
    V = dg.GroundTruth.draw(ks.n_items, ks.d, rng).V
    samples = [dg.gen_fk_instance(V, ks, dg.NoiseSpec(deg=1, eta_bar=1.0), rng) for _ in range(500)]
    in_ball = max(float(np.linalg.norm(s.x_star)) for s in samples) <= 1.0
    violations, errors, worst = 0, 0, -np.inf
    for _ in range(20):
        theta = rng.standard_normal((ks.n_vars, ks.d)) * 10 ** rng.uniform(-2, 2)
        for s in samples:
            try:
                slack = suboptimality_loss(s, theta) - margin_violation(s, theta)
            except Exception:
                errors += 1
                continue
            worst = max(worst, slack)
            violations += slack > 1e-8
    ok = in_ball and violations == 0 and errors == 0
    return CheckResult(7, "suboptimality loss below margin loss", ok, {
        "pairs": 20 * len(samples), "violations": violations, "errors": errors,
        "max_lsub_minus_margin": worst, "feasible_set_in_unit_ball": in_ball,
    })


def check_kernel_psd(seed: int) -> CheckResult:
    rng = dg.rng_for(seed, 106)
    worst = np.inf
    for _ in range(20):
        Z = rng.normal(0.0, rng.uniform(0.2, 2.0), (int(rng.integers(5, 60)), int(rng.integers(2, 8))))
        for spec in (KernelSpec("rbf", gamma=float(rng.uniform(0.1, 10))),
                     KernelSpec("polynomial", gamma=float(rng.uniform(0.1, 10)), degree=int(rng.integers(1, 5)))):
            worst = min(worst, float(np.linalg.eigvalsh(gram_matrix(spec, Z)).min()))
    return CheckResult(13, "kernel Gram matrices are PSD", worst >= -1e-8, {"min_eigenvalue": worst})


# ---------------------------------------------------------------- statistical echoes

def check_separable_recovery(seed: int) -> CheckResult:
    lam_grid = [1.0 / np.sqrt(800), 1e-2, 1e-3, 1e-4]
    base = ExperimentConfig(family="fk", mom=MomFitConfig(tol_objective=1e-4, max_iters=3000))
    t0 = time.perf_counter()
    rates, lams = [], []
    for j in range(10):
        stream = separable_stream("fk", 2000, (seed, 200, j), quantile=0.1)
        train, test = stream.samples[:1000], stream.samples[1000:]
        hp = tune("mom", {"lam": lam_grid}, train[:800], train[800:], base,
                  score=lambda p, v: -evaluate(p, v, "fk", base.solver)["match-rate"])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConvergenceWarning)
            pred = fit_method("mom", hp, train, base)
        rates.append(evaluate(pred, test, "fk", base.solver)["match-rate"])
        lams.append(hp["lam"])
    elapsed = time.perf_counter() - t0
    med = float(np.median(rates))
    ok = med >= 0.95 and elapsed < 120.0
    return CheckResult(6, "separable recovery of optimal solutions", ok, {
        "match_rates": rates, "median_match_rate": med, "lambdas": lams, "under_2min": elapsed < 120.0,
    })


def check_perceptron(seed: int) -> CheckResult:
    ks = dg.KnapsackSpec(n_items=4, d=3, price_mode="uniform-0-1", normalized=True)
    within, flat = 0, 0
    detail = []
    for j in range(10):
        stream = separable_stream("fk", 5000, (seed, 300, j), knapsack=ks, quantile=0.5)
        res = perceptron_run(stream.samples)
        bound = stream.perceptron_bound()
        within += res.mistakes() <= bound
        flat += res.mistakes(2000) == res.mistakes()
        detail.append({"mistakes_2000": res.mistakes(2000), "mistakes_5000": res.mistakes(), "bound": bound})
    return CheckResult(8, "perceptron mistake bound and flatline", within == 10 and flat >= 8, {
        "runs": detail, "within_bound": within, "flat_after_2000": flat,
    })


def _quiet_offline(cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergenceWarning)
        return run_offline_experiment(cfg)


def _sp_config(seed, deg, alpha_bar=0.0, methods=("mom", "ols")):
    return config_from_dict({
        "family": "sp", "deg": deg, "noise": {"alpha_bar": alpha_bar},
        "T_train": 1000, "T_test": 1000, "trials": 10, "seed": seed, "methods": list(methods),
        "grids": {"mom": {"lam": [1e-3, 1e-2, 1e-1, 1.0]}}, "mom": {"tol_objective": 1e-4},
    })


def _per_trial(rows, method, metric):
    vals = values_by_trial(rows, method, metric)
    return [vals.get(t, float("nan")) for t in range(10)]


def check_high_degree(seed: int, deg1_rows=None) -> CheckResult:
    t0 = time.perf_counter()
    rows = _quiet_offline(_sp_config(seed, 6))
    mom = _per_trial(rows, "mom", "rel-loss-sp")
    ols = _per_trial(rows, "ols", "rel-loss-sp")
    wins = int(sum(a < b for a, b in zip(mom, ols)))
    if deg1_rows is None:
        deg1_rows = _quiet_offline(_sp_config(seed, 1))
    ols1 = float(np.median(_per_trial(deg1_rows, "ols", "rel-loss-sp")))
    elapsed = time.perf_counter() - t0
    ok = wins >= 8 and ols1 <= 0.01 and elapsed < 900.0
    return CheckResult(9, "margin fit beats least squares at high degree", ok, {
        "mom_deg6": mom, "ols_deg6": ols, "mom_wins": wins, "ols_deg1_median": ols1,
        "under_15min": elapsed < 900.0,
    })


def check_attack(seed: int, clean_rows=None) -> CheckResult:
    clean_rows = clean_rows if clean_rows is not None else _quiet_offline(_sp_config(seed, 1))
    attacked = _quiet_offline(_sp_config(seed, 1, alpha_bar=2.0))
    med = {}
    for tag, rows in (("clean", clean_rows), ("attacked", attacked)):
        for m in ("mom", "ols"):
            med[f"{m}_{tag}"] = float(np.median(_per_trial(rows, m, "rel-loss-sp")))

    def change(new, old):
        if old > 0:
            return abs(new - old) / old
        return 0.0 if new == old else float("inf")

    mom_change = change(med["mom_attacked"], med["mom_clean"])
    ols_degrades = med["ols_attacked"] > 2.0 * med["ols_clean"]
    ok = mom_change < 0.25 and ols_degrades
    return CheckResult(10, "scale attack hurts least squares only", ok, {
        **med, "mom_relative_change": mom_change, "ols_more_than_doubles": bool(ols_degrades),
    })


def check_collapse(seed: int) -> CheckResult:
    start = 1600
    tuning = [separable_stream("fk", 2000, (seed, 401, k), quantile=0.5) for k in range(3)]
    hp = tune_online("mom-ogd", {"eta_mult": [1.0, 10.0, 100.0]}, tuning)
    ratios, matches = [], []
    for j in range(10):
        stream = separable_stream("fk", 2000, (seed, 400, j), quantile=0.5)
        matches.append(run_online_method("mom-ogd", stream, hp).match_rate(start))
        naive = run_online_method("naive-subopt-ogd", stream, hp)
        norms = np.asarray(naive.theta_norms)
        ratios.append(float(norms[-1] / norms.max()) if norms.max() > 0 else 0.0)
    collapsed = sum(r < 0.1 for r in ratios)
    learned = sum(m >= 0.9 for m in matches)
    ok = collapsed >= 8 and learned >= 8
    return CheckResult(11, "naive suboptimality descent collapses, margin descent learns", ok, {
        "naive_final_over_max_norm": ratios, "ogd_final20_match": matches, "eta_mult": hp["eta_mult"],
        "collapsed": collapsed, "ogd_match_at_least_0.9": learned,
    })


def check_ols_scale_noise(seed: int) -> CheckResult:
    out = {}
    ok = True
    for mean in (0.0, 0.5):
        dev = {500: [], 5000: []}
        for j in range(10):
            rng = dg.rng_for(seed, 500, j, int(mean * 10))
            theta_star = rng.standard_normal((10, 5))
            for row in ols_scale_consistency_probe(theta_star, ScaleNoise(mean, 0.5), [500, 5000], rng):
                dev[row["T"]].append(row["deviation"])
        ratio = float(np.median(dev[5000]) / np.median(dev[500]))
        out[f"ratio_mean_{mean}"] = ratio
        ok &= ratio <= 0.6
    return CheckResult(12, "least squares converges under independent scale noise", bool(ok), out)


def check_kernel_mom(seed: int) -> CheckResult:
    cfg = config_from_dict({
        "family": "fk", "deg": 4, "noise": {"eps_bar": 0.1, "eta_bar": 1.0},
        "T_train": 500, "T_test": 500, "trials": 10, "seed": seed, "methods": ["mom", "mom-kernel"],
        "knapsack": {"price_mode": "integer-1-1000"},
        "grids": {
            "mom": {"lam": [1e-4, 1e-3]},
            "mom-kernel": {"lam": [1e-4, 1e-3], "kernel": [
                {"kind": "polynomial", "gamma": 5.0, "degree": 2},
                {"kind": "rbf", "gamma": 2.0},
                {"kind": "rbf", "gamma": 5.0},
            ]},
        },
        "mom": {"tol_objective": 1e-4, "max_iters": 500},
    })
    rows = _quiet_offline(cfg)
    lin = _per_trial(rows, "mom", "rel-loss-fk")
    ker = _per_trial(rows, "mom-kernel", "rel-loss-fk")
    wins = int(sum(k < l for k, l in zip(ker, lin)))
    return CheckResult(13, "kernelised margin fit beats linear at degree 4", wins >= 7, {
        "linear": lin, "kernel": ker, "kernel_wins": wins,
    })


# ---------------------------------------------------------------- driver

def run_selftest(
    seed: int = 0,
    out: Optional[Path] = None,
    echo: Optional[Callable[[str], None]] = None,
    only: Optional[Sequence[int]] = None,
) -> List[CheckResult]:
    """Run the acceptance checks (criteria 1-13) and optionally write results.

    Criterion 13 has two parts (kernel PSD and kernel vs linear) that must both
    pass; criterion 14 (determinism) compares two result files from this
    function.
    """
    echo = echo or (lambda line: print(line, flush=True))
    results: List[CheckResult] = []
    shared = {}

    def deg1_rows():
        if "deg1" not in shared:
            shared["deg1"] = _quiet_offline(_sp_config(seed, 1))
        return shared["deg1"]

    checks = [
        (1, lambda: check_lp_oracle(seed)),
        (2, lambda: check_optimality_condition(seed)),
        (3, lambda: check_suboptimality_bound(seed)),
        (4, lambda: check_subgradients(seed)),
        (5, lambda: check_scale_invariance(seed)),
        (6, lambda: check_separable_recovery(seed)),
        (7, lambda: check_prop3_inequality(seed)),
        (8, lambda: check_perceptron(seed)),
        (9, lambda: check_high_degree(seed, deg1_rows())),
        (10, lambda: check_attack(seed, deg1_rows())),
        (11, lambda: check_collapse(seed)),
        (12, lambda: check_ols_scale_noise(seed)),
        (13, lambda: _merge_kernel(check_kernel_psd(seed), check_kernel_mom(seed))),
    ]
    for number, fn in checks:
        if only is not None and number not in only:
            continue
        t0 = time.perf_counter()
        res = fn()
        res.seconds = time.perf_counter() - t0
        results.append(res)
        echo(res.line())
    if out is not None:
        text = "".join(r.record() + "\n" for r in results)
        Path(out).write_text(text, encoding="utf-8")
    return results


def _merge_kernel(psd: CheckResult, mom: CheckResult) -> CheckResult:
    values = {**{f"psd_{k}": v for k, v in psd.values.items()}, **mom.values}
    return CheckResult(13, "kernel Gram PSD and kernel beats linear", psd.passed and mom.passed, values)
