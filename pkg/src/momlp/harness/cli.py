"""Command-line interface: ``momlp <subcommand> [options]``.

Exit codes: 0 success, 1 configuration error, 2 runtime error (including a
sweep with at least one failed trial or a failed selftest check).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .. import datagen as dg
from ..features import KernelSpec, KernelTransformer
from ..lp_core import LPError
from .config import OFFLINE_METHODS, ConfigError, ExperimentConfig, load_config
from .experiments import Predictor, evaluate, fit_method, generate_trial, run_offline_experiment, run_online_experiment
from .results import FORMATS, ResultRow, emit, format_rows

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _write_rows(rows, args):
    if args.out:
        emit(rows, args.format, args.out)
    else:
        sys.stdout.write(format_rows(rows, args.format))
    return EXIT_RUNTIME if any(r.failed for r in rows) else EXIT_OK


def cmd_gen(args) -> int:
    cfg = _config(args)
    data = generate_trial(cfg, args.trial)
    samples = data.train if args.split == "train" else data.test
    dg.write_dataset(samples, args.out)
    print(f"wrote {len(samples)} {args.split} samples to {args.out}")
    return EXIT_OK


def _predictor_to_json(method, hp, pred: Predictor) -> dict:
    rec = {"method": method, "hyperparams": hp, "theta": pred.theta.tolist()}
    tf = pred.transform
    if tf is not None:
        spec = tf.spec
        rec["kernel"] = {"kind": spec.kind, "gamma": spec.gamma, "degree": spec.degree}
        rec["Z_train"] = tf.Z_train.tolist()
        rec["scale"] = tf.scale
    return rec


def _predictor_from_json(rec: dict) -> Predictor:
    tf = None
    if "kernel" in rec:
        tf = KernelTransformer(KernelSpec(**rec["kernel"]), rec["Z_train"], scale=rec["scale"])
    return Predictor(np.asarray(rec["theta"], dtype=float), tf)


def cmd_train(args) -> int:
    cfg = _config(args)
    if args.method not in OFFLINE_METHODS:
        raise ConfigError(f"train supports {OFFLINE_METHODS}, got {args.method!r}")
    try:
        hp = json.loads(args.hyperparams)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--hyperparams is not JSON: {exc}") from exc
    samples = dg.read_dataset(args.data)
    pred = fit_method(args.method, hp, samples, cfg, seed=cfg.seed)
    Path(args.out).write_text(json.dumps(_predictor_to_json(args.method, hp, pred), sort_keys=True), encoding="utf-8")
    print(f"wrote {args.method} parameters to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    rec = json.loads(Path(args.theta).read_text(encoding="utf-8"))
    pred = _predictor_from_json(rec)
    samples = dg.read_dataset(args.data)
    scores = evaluate(pred, samples, cfg.family, cfg.solver)
    hp = rec.get("hyperparams", {})
    rows = [ResultRow(0, rec["method"], name, value, hp) for name, value in scores.items()]
    return _write_rows(rows, args)


def cmd_offline(args) -> int:
    return _write_rows(run_offline_experiment(_config(args), workers=args.workers), args)


def cmd_online(args) -> int:
    return _write_rows(run_online_experiment(_config(args), workers=args.workers), args)


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    only = [int(x) for x in args.only.split(",")] if args.only else None
    results = run_selftest(args.seed or 0, args.out, only=only)
    failed = [r.criterion for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_RUNTIME if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="momlp", description="Margin-based learning of LP objectives.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", required=out_required, help="output file (stdout when omitted)")
        p.add_argument("--format", choices=FORMATS, default="csv")

    p = sub.add_parser("gen", help="write one trial's dataset as JSON lines")
    common(p, out_required=True)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="fit one method and write Theta_hat as JSON")
    common(p, out_required=True)
    p.add_argument("--data", required=True, help="dataset file from 'gen'")
    p.add_argument("--method", default="mom", choices=OFFLINE_METHODS)
    p.add_argument("--hyperparams", default="{}", help='JSON, e.g. \'{"lam": 0.01}\'')
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a Theta_hat file on a dataset")
    common(p)
    p.add_argument("--theta", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    for name, fn, text in (("offline", cmd_offline, "offline sweep"), ("online", cmd_online, "online regret sweep")):
        p = sub.add_parser(name, help=text)
        common(p)
        p.add_argument("--workers", type=int, default=1, help="trial-level worker processes")
        p.set_defaults(func=fn)

    p = sub.add_parser("selftest", help="run the acceptance checks")
    common(p)
    p.add_argument("--only", help="comma-separated criterion numbers")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, LPError, dg.GenerationError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
