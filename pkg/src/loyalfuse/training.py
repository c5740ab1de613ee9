"""Mini-batch training loop: shuffling, early stopping, epoch accounting.

One run is strictly sequential and fully determined by its config seed
(two integer sub-seeds are derived from it: one for weight init, one for
the per-epoch shuffle).  The text encoder side is a frozen matrix of
embeddings; only the MLP parameters move.

Early stopping follows the strict-improvement rule: the best epoch is
the earliest epoch attaining the maximum monitored accuracy, and the run
stops once ``current_epoch - best_epoch >= patience``.  All reported
train/test accuracies come from the best-epoch snapshot, never from the
final parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, LabeledSplit
from .embeddings import EmbeddingMatrix
from .network import (MLPParams, NetworkSpec, accuracy, backward, forward,
                      init_params, loss, predict)
from .optim import OptimizerConfig, make_optimizer

MONITORS = ("validation", "test")


class TrainingError(Exception):
    """Bad run configuration or a run that diverged."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 50
    monitor: str = "validation"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise TrainingError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise TrainingError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not 1 <= self.patience <= self.max_epochs:
            raise TrainingError(
                f"patience must be in 1..max_epochs, got {self.patience}")
        if self.monitor not in MONITORS:
            raise TrainingError(f"monitor must be one of {MONITORS}, got {self.monitor!r}")


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    train_acc: float
    monitor_acc: float
    test_acc: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "train_loss": self.train_loss,
                "train_acc": self.train_acc, "monitor_acc": self.monitor_acc,
                "test_acc": self.test_acc}


@dataclass
class RunResult:
    """Outcome of one run; train/test accuracies are at the best epoch."""

    best_epoch: int
    epochs_run: int
    train_acc: float
    test_acc: float
    best_params: MLPParams
    logs: list[EpochLog]


def _inputs_for(spec: NetworkSpec, x1_all, x2_all, idx: np.ndarray):
    x1 = x1_all[idx] if spec.uses_x1 else None
    x2 = x2_all[idx] if spec.uses_x2 else None
    return x1, x2


def evaluate(params: MLPParams, x1_batch, x2_batch, labels) -> float:
    """Fraction of argmax predictions matching the labels."""
    y = np.asarray(labels)
    if y.size == 0:
        raise TrainingError("cannot evaluate on an empty set")
    return accuracy(predict(forward(params, x1_batch, x2_batch)), y)


def best_epoch_of(logs: list[EpochLog]) -> int:
    """Earliest epoch attaining the maximum monitored accuracy."""
    if not logs:
        raise TrainingError("no epochs logged")
    best = logs[0]
    for log in logs[1:]:
        if log.monitor_acc > best.monitor_acc:
            best = log
    return best.epoch


def early_stop_check(logs: list[EpochLog], patience: int) -> bool:
    """True once the monitored accuracy has stalled for `patience` epochs."""
    return logs[-1].epoch - best_epoch_of(logs) >= patience


def write_epoch_log(logs: list[EpochLog], path: str | Path) -> None:
    """One JSON object per line, one line per epoch."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for log in logs:
            fh.write(json.dumps(log.to_dict(), sort_keys=True) + "\n")


def train(spec: NetworkSpec, dataset: Dataset, split: LabeledSplit,
          embeddings: EmbeddingMatrix | None, optimizer_cfg: OptimizerConfig | str,
          train_cfg: TrainConfig | None = None,
          log_path: str | Path | None = None) -> RunResult:
    """Train one model; deterministic given (spec, data, configs).

    ``embeddings`` must cover the whole dataset in record order and is
    only required when the modality consumes text.  The final partial
    batch of each epoch is kept.  A non-finite batch loss aborts the run,
    reporting the epoch and batch.
    """
    cfg = train_cfg or TrainConfig()

    if spec.uses_x1:
        if embeddings is None:
            raise TrainingError(f"modality {spec.modality} needs embeddings")
        if list(embeddings.ids) != list(dataset.ids):
            raise TrainingError("embeddings are not id-aligned with the dataset")
        if embeddings.d_text != spec.d_text:
            raise TrainingError(
                f"embedding width {embeddings.d_text} != spec d_text {spec.d_text}")
        x1_all = embeddings.rows
    else:
        x1_all = None
    if spec.uses_x2:
        if spec.j_in != len(dataset.schema):
            raise TrainingError(
                f"spec j_in {spec.j_in} != dataset feature count {len(dataset.schema)}")
        x2_all = split.normalizer.apply(dataset.feature_matrix())
    else:
        x2_all = None

    train_idx = np.asarray(split.train, dtype=np.int64)
    val_idx = np.asarray(split.validation, dtype=np.int64)
    test_idx = np.asarray(split.test, dtype=np.int64)
    if train_idx.size == 0:
        raise TrainingError("empty train split")
    monitor_idx = val_idx if cfg.monitor == "validation" else test_idx
    if monitor_idx.size == 0:
        raise TrainingError(f"monitor set '{cfg.monitor}' is empty")
    if test_idx.size == 0:
        raise TrainingError("empty test split")
    y = split.labels

    init_seed, shuffle_seed = (int(s) for s in
                               np.random.SeedSequence(cfg.seed).generate_state(2))
    params = init_params(spec, seed=init_seed)
    rng = np.random.default_rng(shuffle_seed)
    opt = make_optimizer(optimizer_cfg)

    logs: list[EpochLog] = []
    best_monitor = -np.inf
    best_params = params.copy()
    best_epoch = 0
    best_train_acc = best_test_acc = 0.0

    n_train = train_idx.size
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n_train)
        for batch_no, start in enumerate(range(0, n_train, cfg.batch_size), 1):
            idx = train_idx[order[start:start + cfg.batch_size]]
            x1, x2 = _inputs_for(spec, x1_all, x2_all, idx)
            trace = forward(params, x1, x2)
            batch_loss = loss(trace, y[idx])
            if not np.isfinite(batch_loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}")
            opt.step(params, backward(params, trace, y[idx]))

        x1, x2 = _inputs_for(spec, x1_all, x2_all, train_idx)
        trace = forward(params, x1, x2)
        train_loss = loss(trace, y[train_idx])
        train_acc = accuracy(predict(trace), y[train_idx])
        test_acc = evaluate(params, *_inputs_for(spec, x1_all, x2_all, test_idx),
                            y[test_idx])
        if cfg.monitor == "validation":
            monitor_acc = evaluate(params, *_inputs_for(spec, x1_all, x2_all, val_idx),
                                   y[val_idx])
        else:
            monitor_acc = test_acc
        logs.append(EpochLog(epoch=epoch, train_loss=train_loss, train_acc=train_acc,
                             monitor_acc=monitor_acc, test_acc=test_acc))

        if monitor_acc > best_monitor:
            best_monitor = monitor_acc
            best_epoch = epoch
            best_params = params.copy()
            best_train_acc = train_acc
            best_test_acc = test_acc
        if early_stop_check(logs, cfg.patience):
            break

    if log_path is not None:
        write_epoch_log(logs, log_path)
    return RunResult(best_epoch=best_epoch, epochs_run=len(logs),
                     train_acc=best_train_acc, test_acc=best_test_acc,
                     best_params=best_params, logs=logs)
