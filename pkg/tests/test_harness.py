import json
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from momlp import datagen as dg
from momlp.harness import cli
from momlp.harness import experiments as ex
from momlp.harness.config import ConfigError, config_from_dict, load_config
from momlp.harness.results import HEADER, ResultRow, emit, format_rows, parse_rows, read_results


# ---------------------------------------------------------------- config

@pytest.mark.parametrize("bad", [
    {"trials": 0}, {"validation_fraction": 1.0}, {"validation_fraction": 0.0}, {"family": "lp"},
    {"methods": ["magic"]}, {"grids": {"mom": {"lam": []}}}, {"noise": {"eps_bar": 2.0}}, {"surprise": 1},
])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        config_from_dict(bad)


def test_config_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"family": "fk", "deg": 3, "d": 4, "knapsack": {"n_items": 6}}))
    cfg = load_config(path)
    assert cfg.noise.deg == 3 and cfg.knapsack.d == 4 and cfg.knapsack.n_items == 6
    assert cfg.validation_fraction == 0.2 and cfg.n_val == 200
    path.write_text("{nope")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


# ---------------------------------------------------------------- results

def _row(i=0, value=0.5):
    return ResultRow(i, "mom", "rel-loss-sp", value, {"lam": 0.01}, None)


def test_empty_rows_give_header_only():
    assert format_rows([], "csv") == ",".join(HEADER) + "\r\n"


def test_single_row_round_trip(tmp_path):
    row = ResultRow(3, "mom-kernel", "l-est", 1 / 3, {"kernel": {"kind": "rbf", "gamma": 2.0}, "note": 'a,"b"'}, 12.5)
    for fmt in ("csv", "jsonl"):
        path = emit([row], fmt, tmp_path / f"r.{fmt}")
        assert read_results(path) == [row]


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 50), st.floats(allow_nan=False, allow_infinity=False),
                          st.sampled_from(["mom", "ols", "ridge"])), max_size=40))
def test_round_trip_property(items):
    rows = [ResultRow(t, m, "l-sub", v, {"k": t}) for t, v, m in items]
    for fmt in ("csv", "jsonl"):
        back = parse_rows(format_rows(rows, fmt), fmt)
        assert back == sorted(rows, key=lambda r: (r.trial, r.method))


def test_ten_thousand_rows(tmp_path):
    rng = np.random.default_rng(0)
    rows = [ResultRow(int(t), "ols", "match-rate", float(v), {}) for t, v in zip(rng.integers(0, 30, 10_000), rng.random(10_000))]
    emit(rows, "csv", tmp_path / "a.csv")
    back = read_results(tmp_path / "a.csv")
    assert back == sorted(rows, key=lambda r: r.trial)
    assert (tmp_path / "a.csv").read_bytes() == format_rows(rows, "csv").encode()


def test_nan_values_and_bad_metric(tmp_path):
    row = ResultRow(0, "ols", "l-est", float("nan"), {"error": "boom"})
    back = parse_rows(format_rows([row], "csv"), "csv")[0]
    assert math.isnan(back.value) and back.failed
    with pytest.raises(ValueError):
        ResultRow(0, "ols", "accuracy", 1.0)
    with pytest.raises(OSError, match="missing"):
        emit([row], "csv", tmp_path / "missing" / "r.csv")


# ---------------------------------------------------------------- tuning

def test_singleton_grid_is_returned(small_fk):
    assert ex.tune("ridge", {"lam": [0.5]}, small_fk[:40], small_fk[40:]) == {"lam": 0.5}


def test_nan_points_are_excluded(small_fk):
    grid = {"lam": [1e-3, 1e-2]}
    calls = []

    def nan_first(pred, val):
        calls.append(1)
        return float("nan") if len(calls) == 1 else 2.0

    # the NaN point would win the tie-break on lambda if it were kept
    assert ex.tune("ridge", grid, small_fk[:40], small_fk[40:], score=nan_first) == {"lam": 1e-2}


def test_ties_go_to_the_smallest_lambda(small_fk):
    grid = {"lam": [1.0, 0.1, 0.01]}
    assert ex.tune("ridge", grid, small_fk[:40], small_fk[40:], score=lambda p, v: 0.0) == {"lam": 0.01}


def test_larger_lambda_loses_on_exact_linear_data():
    # noiseless degree-1 knapsack data: ridge with a huge penalty shrinks the fit to zero
    cfg = config_from_dict({"family": "fk", "T_train": 60, "T_test": 10, "trials": 1,
                            "knapsack": {"price_mode": "uniform-0-1"}, "noise": {"eta_bar": 0.5}})
    data = ex.generate_trial(cfg, 0)
    assert ex.tune("ridge", {"lam": [1e4, 1e-8]}, data.train[:48], data.train[48:], cfg) == {"lam": 1e-8}


# ---------------------------------------------------------------- sweeps

def test_smoke_offline_sweep_is_fast_and_exact_for_ols():
    cfg = config_from_dict({"family": "sp", "T_train": 10, "T_test": 10, "trials": 1, "methods": ["mom", "ols"]})
    t0 = time.perf_counter()
    rows = ex.run_offline_experiment(cfg)
    assert time.perf_counter() - t0 < 5.0
    ols = {r.metric: r.value for r in rows if r.method == "ols"}
    assert ols["rel-loss-sp"] == pytest.approx(0.0, abs=1e-12)
    for method in ("mom", "ols"):
        m = {r.metric: r.value for r in rows if r.method == method}
        assert m["match-rate"] == pytest.approx(1 - m["mistakes"] / 10)


def test_methods_share_the_trial_data():
    cfg = config_from_dict({"family": "fk", "T_train": 8, "T_test": 4, "trials": 1, "seed": 7,
                            "knapsack": {"price_mode": "uniform-0-1"}, "noise": {"eta_bar": 1.0}})
    a, b = ex.generate_trial(cfg, 0), ex.generate_trial(cfg, 0)
    for s, t in zip(a.train + a.test, b.train + b.test):
        np.testing.assert_array_equal(s.c, t.c)


def test_failed_trial_gives_error_rows(monkeypatch):
    cfg = config_from_dict({"family": "sp", "T_train": 10, "T_test": 10, "trials": 2, "methods": ["ols"]})
    real = ex.generate_trial

    def flaky(c, trial):
        if trial == 0:
            raise dg.GenerationError("no instance")
        return real(c, trial)

    monkeypatch.setattr(ex, "generate_trial", flaky)
    rows = ex.run_offline_experiment(cfg)
    assert [r.failed for r in rows if r.trial == 0] == [True]
    assert all(not r.failed for r in rows if r.trial == 1)


def test_online_sweep_and_iterate_sampling():
    cfg = config_from_dict({"family": "fk", "T_train": 150, "trials": 1, "d": 3,
                            "methods": ["mom-ogd", "mom-perceptron", "naive-subopt-ogd"],
                            "grids": {"mom-ogd": {"eta_mult": [10.0]}},
                            "knapsack": {"n_items": 4, "price_mode": "uniform-0-1", "normalized": True},
                            "online": {"checkpoints": [50]}})
    rows = ex.run_online_experiment(cfg)
    regret = [r for r in rows if r.metric == "cum-regret" and r.method == "mom-ogd"]
    assert [r.hyperparams["t"] for r in regret] == [50, 150]
    assert regret[0].value <= regret[1].value
    stream = ex._online_stream(cfg, 0, ex.KEY_TRAIN, 30)
    res = ex.run_online_method("mom-ogd", stream, {"eta_mult": 10.0}, record=True)
    theta = ex.sample_iterate(res, np.random.default_rng(0))
    assert any(np.array_equal(theta, t) for t in res.thetas[:-1])


# ---------------------------------------------------------------- CLI

def test_cli_round_trip(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"family": "fk", "T_train": 20, "T_test": 10, "trials": 1, "methods": ["ols"],
                               "knapsack": {"price_mode": "uniform-0-1"}, "noise": {"eta_bar": 1.0}}))
    d = str(tmp_path)
    assert cli.main(["gen", "--config", str(cfg), "--out", d + "/tr.jsonl"]) == 0
    assert cli.main(["gen", "--config", str(cfg), "--split", "test", "--out", d + "/te.jsonl"]) == 0
    assert cli.main(["train", "--config", str(cfg), "--data", d + "/tr.jsonl", "--method", "ridge",
                     "--hyperparams", '{"lam": 0.01}', "--out", d + "/th.json"]) == 0
    assert cli.main(["eval", "--config", str(cfg), "--theta", d + "/th.json", "--data", d + "/te.jsonl",
                     "--out", d + "/ev.csv"]) == 0
    assert {r.metric for r in read_results(d + "/ev.csv")} >= {"rel-loss-fk", "match-rate"}
    assert cli.main(["offline", "--config", str(cfg), "--seed", "3", "--format", "jsonl", "--out", d + "/o.jsonl"]) == 0
    first = (tmp_path / "o.jsonl").read_bytes()
    cli.main(["offline", "--config", str(cfg), "--seed", "3", "--format", "jsonl", "--out", d + "/o.jsonl"])
    assert (tmp_path / "o.jsonl").read_bytes() == first


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"trials": 0}')
    assert cli.main(["offline", "--config", str(bad)]) == 1
    assert cli.main(["eval", "--theta", str(tmp_path / "none.json"), "--data", str(tmp_path / "none.jsonl")]) == 2
    assert cli.main(["selftest", "--only", "12", "--out", str(tmp_path / "s.jsonl")]) == 0
    rec = json.loads((tmp_path / "s.jsonl").read_text())
    assert rec["criterion"] == 12 and rec["passed"]
