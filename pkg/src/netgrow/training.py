"""Prior-predictive datasets, minibatch training with plateau schedule,
restarts and checkpoints."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import graph as gc
from . import nde
from .autodiff import NonFiniteError, ParamStore, Tape, adam_step
from .graph import Graph
from .models import ModelSpec, registry, sample_prior_predictive
from .rng import stream

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
EVAL_CHUNK = 256


class TrainingError(RuntimeError):
    """Every restart failed."""


# -- datasets -----------------------------------------------------------------


class Dataset:
    """Parameters and graphs with cached edge arrays for fast batching."""

    def __init__(self, thetas: np.ndarray, graphs: Sequence[Graph]):
        self.thetas = np.asarray(thetas, dtype=np.float64).reshape(len(graphs), -1)
        self.graphs = list(graphs)
        self.sizes = np.array([g.n for g in self.graphs], dtype=np.int64)
        self._csr = [nde.csr_parts(g) for g in self.graphs]

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def p(self) -> int:
        return self.thetas.shape[1]

    def batch(self, idx: Sequence[int]) -> nde.GraphBatch:
        parts = [self._csr[i] for i in idx]
        return nde.GraphBatch.from_csr_parts(self.sizes[idx], [p[0] for p in parts], [p[1] for p in parts])

    def subset(self, idx: Sequence[int]) -> Dataset:
        return Dataset(self.thetas[idx], [self.graphs[i] for i in idx])

    def pairs(self) -> list[tuple[np.ndarray, Graph]]:
        return list(zip(self.thetas, self.graphs))

    def save(self, path) -> None:
        gc.write_jsonl(path, zip(self.graphs, self.thetas.tolist()))

    @classmethod
    def load(cls, path) -> Dataset:
        records = gc.read_jsonl(path)
        if not records:
            raise ValueError(f"{path}: empty dataset")
        if any(theta is None for _, theta in records):
            raise ValueError(f"{path}: dataset records need a 'theta' field")
        return cls(np.array([t for _, t in records]), [g for g, _ in records])


def simulate_record(spec: ModelSpec, n: int, seed: int, index: int) -> tuple[np.ndarray, Graph]:
    """Pair ``index`` of the prior predictive stream for ``seed``."""
    return sample_prior_predictive(spec, n, stream(seed, index))


def generate_dataset(
    spec: ModelSpec | str, count: int, n: int, seed: int, start: int = 0, path=None
) -> Dataset:
    """Records ``start .. start+count-1`` of the prior predictive stream."""
    if isinstance(spec, str):
        spec = registry(spec)
    pairs = [simulate_record(spec, n, seed, i) for i in range(start, start + count)]
    data = Dataset(np.array([t for t, _ in pairs]), [g for _, g in pairs])
    if path is not None:
        data.save(path)
    return data


def generate_splits(spec: ModelSpec | str, n: int, sizes: Sequence[int], seed: int) -> list[Dataset]:
    """Consecutive, non-overlapping index ranges of one stream (train, val, test, ...)."""
    out = []
    start = 0
    for size in sizes:
        out.append(generate_dataset(spec, size, n, seed, start=start))
        start += size
    return out


# -- configuration and schedule ----------------------------------------------


@dataclass
class TrainConfig:
    model: str
    gin_layers: int = 1
    depth: int = 5
    width: int = 8
    hidden: int = 8
    n: int = 200
    train_size: int = 2000
    val_size: int = 200
    test_size: int = 500
    batch_size: int = 32
    lr: float = 1e-2
    lr_patience: int = 10
    stop_patience: int = 25
    restarts: int = 5
    max_epochs: int = 1000
    tolerance: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        registry(self.model)
        if self.lr_patience <= 0 or self.stop_patience <= 0:
            raise ValueError("patience values must be positive")
        if self.batch_size <= 0 or self.restarts <= 0:
            raise ValueError("batch size and restarts must be positive")
        if min(self.train_size, self.val_size, self.test_size) <= 0:
            raise ValueError("dataset sizes must be positive")

    def nde_config(self) -> nde.NDEConfig:
        return nde.NDEConfig(
            p=registry(self.model).p,
            gin_layers=self.gin_layers,
            depth=self.depth,
            width=self.width,
            hidden=self.hidden,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


class PlateauSchedule:
    """Halve the learning rate after ``lr_patience`` epochs without a strict
    improvement of the best validation loss; stop after ``stop_patience``.

    The halving counter restarts after each halving.
    """

    def __init__(self, lr: float, lr_patience: int = 10, stop_patience: int = 25, tolerance: float = 1e-6):
        self.lr = lr
        self.lr_patience = lr_patience
        self.stop_patience = stop_patience
        self.tolerance = tolerance
        self.best = math.inf
        self.since_best = 0
        self.since_halving = 0

    def update(self, val_loss: float) -> bool:
        """Record one epoch; returns True if it improved the best loss."""
        if val_loss < self.best - self.tolerance:
            self.best = val_loss
            self.since_best = 0
            self.since_halving = 0
            return True
        self.since_best += 1
        self.since_halving += 1
        if self.since_halving >= self.lr_patience:
            self.lr /= 2
            self.since_halving = 0
        return False

    @property
    def should_stop(self) -> bool:
        return self.since_best >= self.stop_patience


# -- checkpoints --------------------------------------------------------------


@dataclass
class Checkpoint:
    model: str
    config: nde.NDEConfig
    store: ParamStore
    curve: list[dict] = field(default_factory=list)
    seed: int = 0
    restart: int = 0
    best_epoch: int = 0
    best_val_loss: float = math.inf
    train_config: dict | None = None
    restarts: list[dict] = field(default_factory=list)
    train_seconds: float | None = None

    def to_dict(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "model": self.model,
            "nde_config": self.config.to_dict(),
            "params": self.store.to_dict(),
            "curve": self.curve,
            "seed": self.seed,
            "restart": self.restart,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "train_config": self.train_config,
            "restarts": self.restarts,
            "train_seconds": self.train_seconds,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Checkpoint:
        if data.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {data.get('version')!r}")
        return cls(
            model=data["model"],
            config=nde.NDEConfig.from_dict(data["nde_config"]),
            store=ParamStore.from_dict(data["params"]),
            curve=data.get("curve", []),
            seed=data.get("seed", 0),
            restart=data.get("restart", 0),
            best_epoch=data.get("best_epoch", 0),
            best_val_loss=data.get("best_val_loss", math.inf),
            train_config=data.get("train_config"),
            restarts=data.get("restarts", []),
            train_seconds=data.get("train_seconds"),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> Checkpoint:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def write_metrics(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss", "lr"])
            for row in self.curve:
                w.writerow([row["epoch"], row["train_loss"], row["val_loss"], row["lr"]])


# -- training -----------------------------------------------------------------


def evaluate_loss(store: ParamStore, data: Dataset, config: nde.NDEConfig, chunk: int = EVAL_CHUNK) -> float:
    """Mean negative log-probability over a dataset (no gradients)."""
    total = 0.0
    for start in range(0, len(data), chunk):
        idx = np.arange(start, min(start + chunk, len(data)))
        lp = nde.per_graph_log_prob(store, data.batch(idx), data.thetas[idx], config)
        total += -float(np.sum(lp))
    return total / len(data)


def train_step(store: ParamStore, gb: nde.GraphBatch, theta: np.ndarray, config: nde.NDEConfig, lr: float) -> float:
    tape = Tape()
    loss = nde.nll_loss(store, gb, theta, config, tape)
    tape.backward(loss, store)
    adam_step(store, lr)
    return loss.item()


def train_restart(cfg: TrainConfig, train: Dataset, val: Dataset, restart: int) -> Checkpoint:
    """One training run from the initialization of restart index ``restart``."""
    ncfg = cfg.nde_config()
    store = nde.init_params(ncfg, stream(cfg.seed, "init", restart))
    shuffle = stream(cfg.seed, "shuffle", restart)
    schedule = PlateauSchedule(cfg.lr, cfg.lr_patience, cfg.stop_patience, cfg.tolerance)

    val_loss = evaluate_loss(store, val, ncfg)
    schedule.update(val_loss)
    best = store.copy()
    best_epoch = 0
    curve = [{"epoch": 0, "train_loss": None, "val_loss": val_loss, "lr": schedule.lr}]

    for epoch in range(1, cfg.max_epochs + 1):
        lr = schedule.lr
        order = shuffle.permutation(len(train))
        seen = 0
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss = train_step(store, train.batch(idx), train.thetas[idx], ncfg, lr)
            total += loss * len(idx)
            seen += len(idx)
        val_loss = evaluate_loss(store, val, ncfg)
        if not math.isfinite(val_loss):
            raise NonFiniteError("validation", f"epoch {epoch}")
        if schedule.update(val_loss):
            best = store.copy()
            best_epoch = epoch
        curve.append({"epoch": epoch, "train_loss": total / seen, "val_loss": val_loss, "lr": lr})
        log.debug("%s l=%d restart %d epoch %d: train %.4f val %.4f lr %.2e",
                  cfg.model, cfg.gin_layers, restart, epoch, total / seen, val_loss, lr)
        if schedule.should_stop:
            break

    return Checkpoint(
        model=cfg.model,
        config=ncfg,
        store=best,
        curve=curve,
        seed=cfg.seed,
        restart=restart,
        best_epoch=best_epoch,
        best_val_loss=schedule.best,
        train_config=cfg.to_dict(),
    )


def _run_restart(args):
    cfg, train_data, val_data, r = args
    try:
        return train_restart(cfg, train_data, val_data, r), None
    except NonFiniteError as exc:
        return None, str(exc)


def train(cfg: TrainConfig, train_data: Dataset, val_data: Dataset, workers: int = 1) -> Checkpoint:
    """Train ``cfg.restarts`` runs and keep the one with the lowest validation loss.

    Restarts are independent given the seed, so running them in parallel
    (``workers > 1``) gives the same result.
    """
    p = registry(cfg.model).p
    for name, data in (("train", train_data), ("validation", val_data)):
        if len(data) == 0:
            raise ValueError(f"{name} set is empty")
        if data.p != p:
            raise ValueError(f"{name} set has {data.p} parameters per record, {cfg.model} has {p}")
    jobs = [(cfg, train_data, val_data, r) for r in range(cfg.restarts)]
    started = time.perf_counter()
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_restart, jobs))
    else:
        results = [_run_restart(job) for job in jobs]

    summary = []
    best: Checkpoint | None = None
    for r, (ckpt, err) in enumerate(results):
        if ckpt is None:
            log.warning("%s restart %d aborted: %s", cfg.model, r, err)
            summary.append({"restart": r, "best_val_loss": None, "error": err})
            continue
        summary.append({"restart": r, "best_val_loss": ckpt.best_val_loss, "best_epoch": ckpt.best_epoch,
                        "epochs": len(ckpt.curve) - 1})
        if best is None or ckpt.best_val_loss < best.best_val_loss:
            best = ckpt
    if best is None:
        raise TrainingError(f"all {cfg.restarts} restarts failed: " + "; ".join(s["error"] for s in summary))
    best.restarts = summary
    best.train_seconds = time.perf_counter() - started
    return best
