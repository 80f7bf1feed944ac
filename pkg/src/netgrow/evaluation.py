"""Variational mutual-information estimates, bootstrap intervals and the
depth-sweep experiment driver."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import nde, oracles
from .models import prior_entropy, registry
from .rng import stream
from .training import EVAL_CHUNK, Checkpoint, Dataset, TrainConfig, generate_splits, train

log = logging.getLogger(__name__)

CSV_FIELDS = [
    "model",
    "depth",
    "mi",
    "ci_lo",
    "ci_hi",
    "baseline",
    "receptive_field",
    "test_nll",
    "prior_entropy",
    "eval_seconds",
]

# index draws per bootstrap block
BOOTSTRAP_BLOCK = 2_000_000


class ModelMismatchError(ValueError):
    pass


@dataclass
class EvalReport:
    model: str
    depth: int
    mi: float
    test_nll: float
    prior_entropy: float
    eval_seconds: float
    n_test: int
    ci_lo: float | None = None
    ci_hi: float | None = None
    bootstrap_se: float | None = None
    baseline: float | None = None
    log_probs: np.ndarray | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        out = asdict(self)
        out.pop("log_probs")
        return out


def per_graph_log_probs(ckpt: Checkpoint, data: Dataset, chunk: int = EVAL_CHUNK) -> np.ndarray:
    if len(data) == 0:
        raise ValueError("empty test set")
    if data.p != ckpt.config.p:
        raise ModelMismatchError(
            f"checkpoint for {ckpt.model} expects {ckpt.config.p} parameters, test records have {data.p}"
        )
    out = []
    for start in range(0, len(data), chunk):
        idx = np.arange(start, min(start + chunk, len(data)))
        out.append(nde.per_graph_log_prob(ckpt.store, data.batch(idx), data.thetas[idx], ckpt.config))
    return np.concatenate(out)


def bootstrap_means(values: np.ndarray, resamples: int = 1000, seed: int = 0) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise ValueError("bootstrap needs at least two observations")
    rng = stream(seed, "bootstrap")
    # draw indices in blocks of rows to bound memory; the stream is identical
    block = max(1, BOOTSTRAP_BLOCK // values.size)
    out = np.empty(resamples)
    for lo in range(0, resamples, block):
        hi = min(lo + block, resamples)
        out[lo:hi] = values[rng.integers(values.size, size=(hi - lo, values.size))].mean(axis=1)
    return out


def bootstrap_ci(
    log_probs: np.ndarray, resamples: int = 1000, seed: int = 0, level: float = 0.95, offset: float = 0.0
) -> tuple[float, float]:
    """Percentile interval of ``offset + mean(log_probs)`` over resampled test sets."""
    means = offset + bootstrap_means(log_probs, resamples, seed)
    tail = 100 * (1 - level) / 2
    lo, hi = np.percentile(means, [tail, 100 - tail])
    return float(lo), float(hi)


def summarize(
    model: str,
    depth: int,
    log_probs: np.ndarray,
    eval_seconds: float = 0.0,
    bootstrap: int = 1000,
    seed: int = 0,
    baseline: float | None = None,
) -> EvalReport:
    """Report for per-graph log-probabilities of the true parameters."""
    lp = np.asarray(log_probs, dtype=np.float64).reshape(-1)
    if lp.size == 0:
        raise ValueError("empty test set")
    h = prior_entropy(registry(model))
    nll = -math.fsum(lp) / lp.size
    mi = h - nll
    report = EvalReport(
        model=model,
        depth=depth,
        mi=mi,
        test_nll=nll,
        prior_entropy=h,
        eval_seconds=eval_seconds,
        n_test=lp.size,
        baseline=baseline,
        log_probs=lp,
    )
    if bootstrap:
        # resample deviations so that a constant sample yields a zero-width interval
        means = mi + bootstrap_means(lp + nll, bootstrap, seed)
        lo, hi = np.percentile(means, [2.5, 97.5])
        # a percentile interval can miss a skewed point estimate; keep lo <= mi <= hi
        report.ci_lo = float(min(lo, mi))
        report.ci_hi = float(max(hi, mi))
        report.bootstrap_se = float(np.std(means, ddof=1))
    return report


def mutual_information(
    ckpt: Checkpoint,
    test: Dataset,
    bootstrap: int = 1000,
    seed: int = 0,
    model: str | None = None,
    baseline: bool = True,
) -> EvalReport:
    """Variational lower bound ``H[prior] - test NLL`` with a bootstrap interval."""
    if model is not None and model != ckpt.model:
        raise ModelMismatchError(f"checkpoint was trained on {ckpt.model}, test set is from {model}")
    start = time.perf_counter()
    lp = per_graph_log_probs(ckpt, test)
    seconds = time.perf_counter() - start
    exact = None
    if baseline and ckpt.model in oracles.EXACT_POSTERIORS:
        exact = oracles.exact_baseline_mi(ckpt.model, test.pairs())
    return summarize(ckpt.model, ckpt.config.gin_layers, lp, seconds, bootstrap, seed, exact)


def timing(ckpt: Checkpoint, test: Dataset) -> float:
    """Wall seconds for one amortized pass over the whole test set."""
    if len(test) == 0:
        raise ValueError("empty test set")
    start = time.perf_counter()
    per_graph_log_probs(ckpt, test)
    return time.perf_counter() - start


# -- depth sweep --------------------------------------------------------------


def report_row(report: EvalReport) -> dict:
    rf = registry(report.model).receptive_field
    return {
        "model": report.model,
        "depth": report.depth,
        "mi": report.mi,
        "ci_lo": report.ci_lo,
        "ci_hi": report.ci_hi,
        "baseline": report.baseline,
        "receptive_field": rf,
        "test_nll": report.test_nll,
        "prior_entropy": report.prior_entropy,
        "eval_seconds": report.eval_seconds,
    }


def read_sweep(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        return []
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            row: dict = {"model": raw["model"], "depth": int(raw["depth"])}
            for key in CSV_FIELDS[2:]:
                val = raw.get(key, "")
                if val == "":
                    row[key] = None
                elif key == "receptive_field":
                    row[key] = int(val)
                else:
                    row[key] = float(val)
            rows.append(row)
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def append_row(path, row: dict) -> None:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(CSV_FIELDS)
        w.writerow([_fmt(row[k]) for k in CSV_FIELDS])


def depth_sweep(
    model: str,
    depths: Iterable[int],
    config: TrainConfig | None = None,
    out=None,
    datasets: Sequence[Dataset] | None = None,
    checkpoint_dir=None,
    bootstrap: int = 1000,
    workers: int = 1,
) -> list[dict]:
    """Train and evaluate one NDE per GIN depth; one CSV row per depth.

    Rows already present in ``out`` for this model are kept and their depths
    skipped, so an interrupted sweep resumes where it stopped.
    """
    depths = list(depths)
    config = config or TrainConfig(model=model)
    if config.model != model:
        config = replace(config, model=model)
    done = {r["depth"]: r for r in read_sweep(out) if r["model"] == model} if out else {}
    todo = [d for d in depths if d not in done]
    rows = dict(done)
    if todo:
        if datasets is None:
            datasets = generate_splits(model, config.n, [config.train_size, config.val_size, config.test_size], config.seed)
        train_data, val_data, test_data = datasets
        for depth in todo:
            cfg = replace(config, gin_layers=depth)
            start = time.perf_counter()
            ckpt = train(cfg, train_data, val_data, workers=workers)
            log.info("%s depth %d trained in %.0fs (restart %d, val %.4f)", model, depth,
                     time.perf_counter() - start, ckpt.restart, ckpt.best_val_loss)
            if checkpoint_dir is not None:
                Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
                ckpt.save(Path(checkpoint_dir) / f"{model}-depth{depth}.json")
            report = mutual_information(ckpt, test_data, bootstrap=bootstrap, seed=config.seed)
            row = report_row(report)
            rows[depth] = row
            if out is not None:
                append_row(out, row)
    return [rows[d] for d in sorted(set(depths))]
