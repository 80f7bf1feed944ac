"""Command-line entry point: ``netgrow {simulate,train,eval,sweep,oracle}``.

Exit codes: 0 success, 1 I/O or malformed files, 2 usage or validation
errors, 3 numeric failure during training.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import evaluation, oracles
from .autodiff import NonFiniteError
from .graph import GraphError, iter_jsonl
from .models import MODEL_NAMES, registry
from .rng import SEED_ENV, default_seed
from .training import Checkpoint, Dataset, TrainConfig, TrainingError, generate_dataset, generate_splits, train

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

ORACLES = ("random_connection", "connected_small_world", "redirection_bruteforce")

# TrainConfig fields exposed as flags; --depth is the GIN depth ℓ, --total-depth is L
OVERRIDES = {
    "depth": ("gin_layers", int),
    "total_depth": ("depth", int),
    "width": ("width", int),
    "hidden": ("hidden", int),
    "n": ("n", int),
    "train_size": ("train_size", int),
    "val_size": ("val_size", int),
    "test_size": ("test_size", int),
    "batch_size": ("batch_size", int),
    "lr": ("lr", float),
    "lr_patience": ("lr_patience", int),
    "stop_patience": ("stop_patience", int),
    "restarts": ("restarts", int),
    "max_epochs": ("max_epochs", int),
    "tolerance": ("tolerance", float),
}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _existing(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} not found: {path}", EXIT_IO)
    return p


def _writable(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    parent = p.parent if str(p.parent) else Path(".")
    if not parent.is_dir():
        raise CliError(f"output directory does not exist: {parent}", EXIT_IO)
    return p


def _seed(args) -> int:
    return args.seed if args.seed is not None else default_seed(0)


def _load_dataset(path: str, what: str) -> Dataset:
    p = _existing(path, what)
    try:
        return Dataset.load(p)
    except (GraphError, ValueError) as exc:
        raise CliError(f"{what} {path}: {exc}", EXIT_IO) from exc


def _train_config(args) -> TrainConfig:
    values: dict = {}
    if getattr(args, "config", None):
        try:
            values.update(json.loads(_existing(args.config, "config file").read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise CliError(f"config file {args.config}: {exc}", EXIT_IO) from exc
        known = {f.name for f in fields(TrainConfig)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise CliError(f"unknown config keys: {', '.join(unknown)}", EXIT_USAGE)
    for flag, (key, _) in OVERRIDES.items():
        val = getattr(args, flag, None)
        if val is not None:
            values[key] = val
    if args.model is not None:
        values["model"] = args.model
    if "model" not in values:
        raise CliError("--model is required", EXIT_USAGE)
    if args.seed is not None or "seed" not in values:
        values["seed"] = _seed(args)
    try:
        return TrainConfig(**values)
    except (ValueError, TypeError) as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc


# -- subcommands ----------------------------------------------------------------


def cmd_simulate(args) -> int:
    out = _writable(args.out)
    if args.n < 1 or args.count < 1:
        raise CliError("--n and --count must be positive", EXIT_USAGE)
    spec = registry(args.model)
    if args.n < spec.min_nodes:
        raise CliError(f"{spec.name} needs n >= {spec.min_nodes}", EXIT_USAGE)
    data = generate_dataset(spec, args.count, args.n, _seed(args), start=args.start, path=out)
    edges = np.array([g.num_edges for g in data.graphs], dtype=np.float64)
    _say(f"wrote {len(data)} graphs to {out}: mean |E| {edges.mean():.2f}, "
         f"mean degree {np.mean(2 * edges / data.sizes):.3f}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _train_config(args)
    train_data = _load_dataset(args.train, "training set")
    val_data = _load_dataset(args.val, "validation set")
    out = _writable(args.out)
    metrics = _writable(args.metrics) if args.metrics else out.with_suffix(".metrics.csv")
    try:
        ckpt = train(cfg, train_data, val_data, workers=args.workers)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    except (NonFiniteError, TrainingError) as exc:
        raise CliError(f"numeric failure: {exc}", EXIT_NUMERIC) from exc
    ckpt.save(out)
    ckpt.write_metrics(metrics)
    _say(f"best val loss {ckpt.best_val_loss:.6f} at epoch {ckpt.best_epoch}; "
         f"restart {ckpt.restart} of {cfg.restarts} (seed {cfg.seed}); checkpoint {out}, metrics {metrics}")
    return EXIT_OK


def _emit_json(payload, out: Path | None) -> None:
    text = json.dumps(payload, sort_keys=True)
    if out is None:
        print(text)
    else:
        out.write_text(text + "\n", encoding="utf-8")


def cmd_eval(args) -> int:
    try:
        ckpt = Checkpoint.load(_existing(args.checkpoint, "checkpoint"))
    except (ValueError, KeyError) as exc:
        raise CliError(f"checkpoint {args.checkpoint}: {exc}", EXIT_IO) from exc
    test = _load_dataset(args.test, "test set")
    out = _writable(args.out)
    try:
        report = evaluation.mutual_information(ckpt, test, bootstrap=args.bootstrap, seed=_seed(args), model=args.model)
    except evaluation.ModelMismatchError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    except oracles.InconsistentGraphError as exc:
        raise CliError(f"test set is inconsistent with {ckpt.model}: {exc}", EXIT_USAGE) from exc
    _emit_json(report.to_json(), out)
    _say(f"{ckpt.model} l={report.depth}: I = {report.mi:.4f} nats over {report.n_test} graphs "
         f"({report.eval_seconds:.2f}s)")
    return EXIT_OK


def _depths(text: str) -> list[int]:
    try:
        if ":" in text:
            lo, hi = text.split(":")
            return list(range(int(lo), int(hi) + 1))
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo:hi' or a comma list, got {text!r}") from None


def cmd_sweep(args) -> int:
    cfg = _train_config(args)
    out = _writable(args.out)
    bad = [d for d in args.depths if not 0 <= d <= cfg.depth]
    if bad:
        raise CliError(f"depths must lie in 0..{cfg.depth}, got {bad}", EXIT_USAGE)
    datasets = None
    given = [args.train, args.val, args.test]
    if any(given):
        if not all(given):
            raise CliError("--train, --val and --test must be given together", EXIT_USAGE)
        datasets = [_load_dataset(p, what) for p, what in zip(given, ("training set", "validation set", "test set"))]
    try:
        rows = evaluation.depth_sweep(
            cfg.model, args.depths, cfg, out=out, datasets=datasets,
            checkpoint_dir=args.checkpoint_dir, bootstrap=args.bootstrap, workers=args.workers,
        )
    except (NonFiniteError, TrainingError) as exc:
        raise CliError(f"numeric failure: {exc}", EXIT_NUMERIC) from exc
    for row in rows:
        _say(f"{row['model']} l={row['depth']}: I = {row['mi']:.4f}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    path = _existing(args.graph, "graph file")
    out = _writable(args.out)
    results = []
    try:
        for g, _ in iter_jsonl(path):
            if args.model == "redirection_bruteforce":
                results.append(oracles.marginal_posterior_bruteforce(g).to_json())
            else:
                results.append(oracles.exact_posterior(args.model, g).to_json())
    except GraphError as exc:
        raise CliError(f"graph file {args.graph}: {exc}", EXIT_IO) from exc
    except ValueError as exc:  # includes InconsistentGraphError and the size guard
        raise CliError(str(exc), EXIT_USAGE) from exc
    if out is None:
        for r in results:
            print(json.dumps(r))
    else:
        with open(out, "w", encoding="utf-8") as fh:
            for r in results:
                fh.write(json.dumps(r) + "\n")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help=f"master seed (default: ${SEED_ENV} or 0)")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with TrainConfig keys; flags take precedence")
    for flag, (key, typ) in OVERRIDES.items():
        help_text = {"depth": "GIN depth l", "total_depth": "total depth L"}.get(flag, key)
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ, default=None, help=help_text)
    p.add_argument("--workers", type=int, default=1, help="processes for parallel restarts")
    _add_seed(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netgrow", description="Inference for growing-network models.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write prior-predictive graphs as JSON lines")
    p.add_argument("--model", required=True, choices=MODEL_NAMES)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--start", type=int, default=0, help="first record index of the stream")
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a density estimator")
    p.add_argument("--model", choices=MODEL_NAMES)
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--metrics", help="metrics CSV (default: next to the checkpoint)")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="estimate mutual information on a test set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--model", choices=MODEL_NAMES, help="generator of the test set, checked against the checkpoint")
    p.add_argument("--bootstrap", type=int, default=1000, help="resamples; 0 skips the interval")
    p.add_argument("--out", help="report JSON path (default: stdout)")
    _add_seed(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train and evaluate across GIN depths")
    p.add_argument("--model", choices=MODEL_NAMES)
    p.add_argument("--depths", type=_depths, default=list(range(6)), help="'0:5' or '1,3,5'")
    p.add_argument("--out", required=True, help="CSV path; existing rows are kept")
    p.add_argument("--train")
    p.add_argument("--val")
    p.add_argument("--test")
    p.add_argument("--checkpoint-dir")
    p.add_argument("--bootstrap", type=int, default=1000)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="exact posteriors for tractable models")
    p.add_argument("--model", required=True, choices=ORACLES)
    p.add_argument("--graph", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        _say(f"netgrow {args.command}: {exc}")
        return exc.code
    except OSError as exc:
        _say(f"netgrow {args.command}: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
