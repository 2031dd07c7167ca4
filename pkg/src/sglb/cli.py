"""Command line entry point: synth, train, predict, eval, bench, diagnose.

Exit codes: 0 success, 1 usage error, 2 runtime or data error, 3 failed check.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import diagnostics as diag
from .boosting import ConfigError, TrainConfig, TrainingDiverged, evaluate, train
from .data import DataError, compute_borders, generate_synthetic, load_csv, quantize, save_csv
from .experiments import ExperimentSpec, run_experiment, synthetic_methods
from .losses import Loss
from .model_io import ModelFormatError, load_model, save_model

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3

TUNING_RANGES = """\
tuning ranges used for random search on real data (200 samples):
  learning-rate: log-uniform distribution over [1e-5, 1]
  l2-leaf-reg: log-uniform distribution over [1e-1, 1e1] for SGB and l2-leaf-reg=0 for SGLB
  depth: uniform distribution over {6, 7, 8, 9, 10}
  subsample: uniform distribution over [0, 1]
  model-shrink-rate: log-uniform distribution over [1e-5, 1e-2] for SGLB
  diffusion-temperature: log-uniform distribution over [1e2, 1e5] for SGLB
defaults: border-count 64, random-strength 0"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _number(kind, check, desc):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {desc}, got {text!r}") from None
        if not check(value):
            raise argparse.ArgumentTypeError(f"expected {desc}, got {text!r}")
        return value

    return parse


positive_float = _number(float, lambda v: v > 0 and not math.isnan(v), "a positive number")
nonneg_float = _number(float, lambda v: v >= 0 and math.isfinite(v), "a non-negative number")
positive_int = _number(int, lambda v: v >= 1, "a positive integer")
nonneg_int = _number(int, lambda v: v >= 0, "a non-negative integer")
rate = _number(float, lambda v: 0 < v <= 1, "a rate in (0, 1]")


def _target(text: str):
    return int(text) if text.lstrip("-").isdigit() else text


def _add_data_args(p, target_required=True):
    p.add_argument("--data", required=True, type=Path, help="comma-separated numeric CSV")
    p.add_argument("--target", type=_target, default="y" if target_required else None,
                   help="target column name or 0-based index (default: %(default)s)")
    p.add_argument("--no-header", action="store_true", help="the CSV has no header row")


def _add_loss_args(p):
    p.add_argument("--loss", choices=["sla", "logloss", "mse"], default="sla",
                   help="sla = sigmoid-smoothed 0-1 loss (default), logloss, or mse = (z-y)^2/2")
    p.add_argument("--sla-sigma", type=positive_float, default=0.1,
                   help="SLA temperature (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sglb", description="Stochastic gradient Langevin boosting over oblivious trees.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write the synthetic 3-feature dataset to CSV")
    p.add_argument("--n", type=positive_int, required=True, help="number of rows")
    p.add_argument("--seed", type=int, required=True, help="random seed")
    p.add_argument("--out", type=Path, required=True, help="output CSV path")

    p = sub.add_parser(
        "train", help="train a model and save it",
        epilog=TUNING_RANGES, formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_data_args(p)
    p.add_argument("--valid", type=Path, help="validation CSV, same columns as --data")
    _add_loss_args(p)
    p.add_argument("--mode", choices=["gb", "sgb", "sglb"], default="sglb",
                   help="gb: plain boosting; sgb: Bernoulli-subsampled; sglb: Langevin boosting (default)")
    p.add_argument("--learning-rate", type=positive_float, default=0.1,
                   help="learning rate epsilon (default: %(default)s; tuning range log-uniform over [1e-5, 1])")
    p.add_argument("--iterations", type=nonneg_int, default=1000, help="number of trees (default: %(default)s)")
    p.add_argument("--diffusion-temperature", type=positive_float, default=1e3,
                   help="inverse temperature beta for sglb (default: %(default)s; tuning range log-uniform over [1e2, 1e5])")
    p.add_argument("--model-shrink-rate", type=nonneg_float, default=1e-3,
                   help="shrink rate gamma for sglb (default: %(default)s; tuning range log-uniform over [1e-5, 1e-2])")
    p.add_argument("--random-strength", type=nonneg_float, default=0.0,
                   help="split score noise rho (default: %(default)s)")
    p.add_argument("--depth", type=positive_int, default=6,
                   help="tree depth (default: %(default)s; tuning range uniform over {6, ..., 10})")
    p.add_argument("--border-count", type=positive_int, default=64, help="borders per feature (default: %(default)s)")
    p.add_argument("--subsample", type=rate, default=None,
                   help="Bernoulli rate for sgb (default 0.5 for sgb, 1 otherwise; tuning range uniform over [0, 1])")
    p.add_argument("--use-best-model", action="store_true",
                   help="truncate to the iteration with the lowest validation loss (needs --valid)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")
    p.add_argument("--model", type=Path, required=True, help="output model file")
    p.add_argument("--trace", type=Path, help="write per-iteration losses as JSON lines")

    p = sub.add_parser("predict", help="one prediction per input row")
    p.add_argument("--model", type=Path, required=True)
    _add_data_args(p, target_required=False)
    p.add_argument("--predict-type", choices=["raw", "class"], default="raw",
                   help="raw score, or class = 1 if raw > 0 else 0")
    p.add_argument("--out", type=Path, help="write predictions here instead of stdout")

    p = sub.add_parser("eval", help="mean loss and 0-1 error of a model on labelled data")
    p.add_argument("--model", type=Path, required=True)
    _add_data_args(p)
    _add_loss_args(p)

    p = sub.add_parser("bench", help="benchmarks")
    bench = p.add_subparsers(dest="bench", required=True, parser_class=_Parser)
    b = bench.add_parser("synthetic", help="cross-validated 0-1 loss of the four synthetic-study methods")
    b.add_argument("--folds", type=positive_int, default=20, help="number of folds (default: %(default)s)")
    b.add_argument("--train-size", type=positive_int, default=1000)
    b.add_argument("--test-size", type=positive_int, default=1000)
    b.add_argument("--iterations", type=positive_int, default=1000, help="trees per model (default: %(default)s)")
    b.add_argument("--seed", type=int, required=True, help="master seed (required)")
    b.add_argument("--workers", type=positive_int, default=1, help="parallel fold workers")
    b.add_argument("--out", type=Path, help="write one JSON record per method")

    p = sub.add_parser("diagnose", help="structural and statistical self-checks")
    p.add_argument("--check", choices=["projector", "pinv", "pinfinity", "gibbs", "all"], default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="write one JSON record per check")
    return parser


def _dataset(args, path=None, target=...):
    target = args.target if target is ... else target
    return load_csv(path or args.data, target, not args.no_header)


def cmd_synth(args) -> int:
    save_csv(generate_synthetic(args.n, args.seed), args.out)
    print(f"wrote {args.n} rows to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    if args.use_best_model and args.valid is None:
        raise UsageError("sglb train: --use-best-model needs --valid")
    subsample = args.subsample if args.subsample is not None else (0.5 if args.mode == "sgb" else 1.0)
    if args.mode == "gb" and subsample != 1.0:
        raise UsageError("sglb train: --subsample requires --mode sgb or sglb")
    try:
        config = TrainConfig(
            mode=args.mode, learning_rate=args.learning_rate, beta=args.diffusion_temperature,
            gamma=args.model_shrink_rate, random_strength=args.random_strength, depth=args.depth,
            border_count=args.border_count, iterations=args.iterations, subsample=subsample,
            loss=Loss(args.loss, args.sla_sigma), seed=args.seed, use_best_model=args.use_best_model,
        )
    except ConfigError as exc:
        raise UsageError(f"sglb train: {exc}") from exc
    data = _dataset(args)
    borders = compute_borders(data, config.border_count)
    q = quantize(data, borders)
    qv = None
    if args.valid is not None:
        qv = quantize(_dataset(args, args.valid), borders)
    model, trace = train(config, q, qv)
    save_model(model, args.model)
    if args.trace:
        with args.trace.open("w") as fh:
            for i, tl in enumerate(trace.train_loss):
                rec = {"iteration": i, "train_loss": tl}
                if trace.valid_loss:
                    rec["valid_loss"] = trace.valid_loss[i]
                fh.write(json.dumps(rec) + "\n")
    final_train = evaluate(model, data, config.loss)
    print(f"trees: {len(model.trees)}  noise scale: {trace.noise_scale:.6g}")
    print(f"train loss: {final_train[0]:.6f}  train 0-1: {final_train[1]:.6f}")
    if qv is not None:
        final_valid = evaluate(model, _dataset(args, args.valid), config.loss)
        print(f"valid loss: {final_valid[0]:.6f}  valid 0-1: {final_valid[1]:.6f}")
    print(f"model saved to {args.model}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    data = _dataset(args)
    raw = model.predict(data.features)
    if args.predict_type == "class":
        lines = [str(int(v > 0)) for v in raw]
    else:
        lines = [repr(float(v)) for v in raw]
    text = "\n".join(lines) + "\n"
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model)
    data = _dataset(args)
    loss, zero_one = evaluate(model, data, Loss(args.loss, args.sla_sigma))
    print(f"loss ({args.loss}): {loss:.6f}")
    print(f"0-1 loss: {zero_one:.6f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    spec = ExperimentSpec(
        folds=args.folds, train_size=args.train_size, test_size=args.test_size,
        methods=synthetic_methods(args.iterations), seed=args.seed,
    )
    log = logging.getLogger("sglb.bench")
    result = run_experiment(spec, workers=args.workers,
                            progress=lambda f, r: log.info("fold %d: %s", f, r))
    print(result.table())
    if args.out:
        with args.out.open("w") as fh:
            for rec in result.records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return EXIT_OK


def _check_projector(rng) -> dict:
    worst = {"symmetry_defect": 0.0, "idempotence_defect": 0.0, "image_residual": 0.0}
    for _ in range(100):
        n = int(rng.integers(1, 201))
        leaves = 2 ** int(rng.integers(1, 5))
        rep = diag.check_projector(rng.integers(0, leaves, n), leaves, rng)
        for k in worst:
            worst[k] = max(worst[k], getattr(rep, k))
    return {"name": "projector", "metrics": worst,
            "passed": max(worst.values()) <= diag.PROJECTOR_TOL}


def _check_pinv(rng) -> dict:
    from .trees import estimate_leaves

    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 201))
        leaves = 2 ** int(rng.integers(1, 5))
        a = rng.integers(0, leaves, n)
        t = rng.standard_normal(n)
        worst = max(worst, float(np.max(np.abs(estimate_leaves(t, a, leaves) - diag.pinv_leaf_oracle(a, t, leaves)))))
    return {"name": "pinv", "metrics": {"max_abs_error": worst}, "passed": worst <= 1e-10}


def _check_pinfinity(rng) -> dict:
    q = diag.isolating_dataset(np.zeros(8))
    est = diag.estimate_p_infinity(q, depth=q.n_features, samples=50, rng=rng)
    err = float(np.max(np.abs(est.matrix - 8 * np.eye(8))))
    eig = float(np.linalg.eigvalsh(est.matrix).min())
    return {"name": "pinfinity", "metrics": {"max_abs_error_vs_NI": err, "min_eigenvalue": eig},
            "passed": err <= 1e-12 and eig > 0}


def _check_gibbs(rng) -> dict:
    rep = diag.gibbs_moment_test([1, -1, 2, 0], 100.0, 0.5, 1e-3, 2_000_000, 100_000, rng)
    con = diag.discretization_consistency([1, -1, 2, 0], 100.0, 0.5, rng=rng)
    metrics = rep.as_dict()
    metrics["consistency_errors"] = con.variance_error
    metrics["consistency_improved_steps"] = con.improved_steps
    return {"name": "gibbs", "metrics": metrics, "passed": rep.passed and con.passed}


CHECKS = {"projector": _check_projector, "pinv": _check_pinv,
          "pinfinity": _check_pinfinity, "gibbs": _check_gibbs}


def cmd_diagnose(args) -> int:
    names = list(CHECKS) if args.check == "all" else [args.check]
    records = []
    for name in names:
        rec = CHECKS[name](np.random.default_rng(args.seed))
        records.append(rec)
        status = "PASS" if rec["passed"] else "FAIL"
        print(f"[{status}] {name}")
        for k, v in rec["metrics"].items():
            if isinstance(v, float):
                print(f"    {k}: {v:.6g}")
            elif isinstance(v, list) and all(isinstance(x, float) for x in v):
                print(f"    {k}: [{', '.join(f'{x:.6g}' for x in v)}]")
            else:
                print(f"    {k}: {v}")
    if args.out:
        with args.out.open("w") as fh:
            for rec in records:
                fh.write(json.dumps(diag_record(rec), sort_keys=True) + "\n")
    return EXIT_OK if all(r["passed"] for r in records) else EXIT_CHECK


def diag_record(rec: dict) -> dict:
    def fix(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, (list, tuple)):
            return [fix(x) for x in v]
        if isinstance(v, dict):
            return {k: fix(x) for k, x in v.items()}
        return v

    return fix(rec)


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "predict": cmd_predict,
            "eval": cmd_eval, "bench": cmd_bench, "diagnose": cmd_diagnose}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelFormatError, TrainingDiverged, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
