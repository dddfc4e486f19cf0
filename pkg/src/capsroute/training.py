"""Training loop with early stopping, deterministic records, and evaluation.

Determinism contract: given identical data, configuration, and seed, two runs
produce identical parameters and an identical ``canonical_text()`` record.
Wall-clock timings are recorded but live outside the canonical serialization,
since they are the one field that legitimately differs between runs. Training
is single-threaded by design; parallel speed-ups would reorder float
accumulation and break the contract.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import EchoDataset
from .errors import ConfigurationError
from .metrics import MetricsReport
from .optim import Adam
from .tensor import Tensor, no_grad

__all__ = ["TrainConfig", "EpochStats", "ExperimentRecord", "train", "evaluate", "validation_loss"]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 8
    max_epochs: int = 100
    patience: int = 5
    seed: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigurationError("batch_size and max_epochs must be >= 1")
        if self.patience < 1:
            raise ConfigurationError(f"patience must be >= 1, got {self.patience}")


@dataclass
class EpochStats:
    epoch: int
    train_total: float
    train_classification: float
    train_regression: float
    train_reconstruction: float
    val_total: float

    def line(self) -> str:
        return ",".join(
            [
                str(self.epoch),
                repr(self.train_total),
                repr(self.train_classification),
                repr(self.train_regression),
                repr(self.train_reconstruction),
                repr(self.val_total),
            ]
        )


@dataclass
class ExperimentRecord:
    """Everything needed to describe (and re-run) one training run."""

    config: dict[str, str]
    seed: int
    epochs: list[EpochStats] = field(default_factory=list)
    metrics: dict[str, MetricsReport] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    best_epoch: int = 0

    def to_text(self, include_timings: bool = True) -> str:
        lines = ["[config]"]
        lines += [f"{k}={v}" for k, v in sorted(self.config.items())]
        lines.append("[seed]")
        lines.append(f"seed={self.seed}")
        lines.append("[epochs]")
        lines.append("epoch,train_total,train_classification,train_regression,train_reconstruction,val_total")
        lines += [e.line() for e in self.epochs]
        lines.append(f"best_epoch={self.best_epoch}")
        for split_name in sorted(self.metrics):
            lines.append(f"[metrics {split_name}]")
            lines.append(self.metrics[split_name].to_text())
        if include_timings:
            lines.append("[timings]")  # volatile: excluded from canonical_text()
            lines += [f"{k}={v:.6f}" for k, v in sorted(self.timings.items())]
        return "\n".join(lines) + "\n"

    def canonical_text(self) -> str:
        """Deterministic serialization: identical runs compare equal as strings."""
        return self.to_text(include_timings=False)

    def metric_csv(self) -> str:
        rows = ["metric,value,seed"]
        for split_name in sorted(self.metrics):
            rows += [f"{split_name}.{r}" for r in self.metrics[split_name].csv_rows(self.seed)]
        return "\n".join(rows) + "\n"


def _batch_indices(n: int, batch_size: int):
    for start in range(0, n, batch_size):
        yield np.arange(start, min(start + batch_size, n))


def _loss_over(model, dataset: EchoDataset, batch_size: int) -> float:
    total = 0.0
    for idx in _batch_indices(len(dataset), batch_size):
        images = Tensor(dataset.images[idx].astype(np.float64))
        loss, _ = model.training_loss(images, dataset.labels[idx], dataset.reg_targets[idx])
        total += loss.item() * idx.size
    return total / len(dataset)


def validation_loss(model, dataset: EchoDataset, batch_size: int = 64) -> float:
    """Sample-weighted mean training objective over a dataset, without gradients."""
    with no_grad():
        return _loss_over(model, dataset, batch_size)


def train(
    model,
    train_set: EchoDataset,
    val_set: EchoDataset,
    tc: TrainConfig,
    config_snapshot: dict[str, str] | None = None,
) -> ExperimentRecord:
    """Optimize ``model`` with Adam and patience-based early stopping.

    Validation total loss is monitored once per epoch; an epoch counts against
    the patience budget unless it strictly improves on the best value seen.
    When the budget runs out (or max_epochs is hit) the parameters snapshot
    from the best epoch is restored.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ConfigurationError(
            f"train() needs non-empty splits, got {len(train_set)} train / {len(val_set)} val"
        )
    record = ExperimentRecord(config=dict(config_snapshot or {}), seed=tc.seed)
    params = model.parameters()
    optimizer = Adam(params, lr=tc.lr, beta1=tc.beta1, beta2=tc.beta2, eps=tc.eps)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(tc.seed, spawn_key=(1,)))

    best_val = np.inf
    best_state = {name: p.data.copy() for name, p in params}
    bad_epochs = 0
    started = time.perf_counter()

    for epoch in range(1, tc.max_epochs + 1):
        sums = {"total": 0.0, "classification": 0.0, "regression": 0.0, "reconstruction": 0.0}
        perm = shuffle_rng.permutation(len(train_set))
        for idx in _batch_indices(len(train_set), tc.batch_size):
            chosen = perm[idx]
            images = Tensor(train_set.images[chosen].astype(np.float64))
            loss, parts = model.training_loss(
                images, train_set.labels[chosen], train_set.reg_targets[chosen]
            )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            for key in sums:
                sums[key] += parts[key] * chosen.size

        n = len(train_set)
        val_total = validation_loss(model, val_set, tc.batch_size)
        record.epochs.append(
            EpochStats(
                epoch=epoch,
                train_total=sums["total"] / n,
                train_classification=sums["classification"] / n,
                train_regression=sums["regression"] / n,
                train_reconstruction=sums["reconstruction"] / n,
                val_total=val_total,
            )
        )
        if val_total < best_val:
            best_val = val_total
            best_state = {name: p.data.copy() for name, p in params}
            record.best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= tc.patience:
                break

    for name, p in params:
        p.data = best_state[name]
    record.timings["train_seconds"] = time.perf_counter() - started
    return record


def evaluate(model, dataset: EchoDataset, batch_size: int = 64) -> MetricsReport:
    """Run the model over a dataset in order and summarize the predictions."""
    if len(dataset) == 0:
        raise ConfigurationError("evaluate() needs a non-empty dataset")
    preds, scores = [], []
    with no_grad():
        for idx in _batch_indices(len(dataset), batch_size):
            images = Tensor(dataset.images[idx].astype(np.float64))
            p, s = model.predict(images)
            preds.append(p)
            scores.append(s)
    return MetricsReport.from_predictions(
        np.concatenate(preds), np.concatenate(scores), dataset.labels.astype(np.int64)
    )
