"""Mini-batch training loop, evaluation and the CSV training log."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import balanced_batches
from ..errors import IndivisibleBatch, ShapeMismatch
from ..metrics import MetricsReport, confusion, report
from .model import (
    AdamConfig,
    AdamState,
    ModelSpec,
    Weights,
    adam_step,
    backward,
    forward,
    init_weights,
)

EVAL_CHUNK = 32


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch: int = 6
    epochs: int = 30
    seed: int = 0
    # float32 is a speed option; oracle tests always run in float64.
    dtype: str = "float64"

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.batch < 1 or self.epochs < 0:
            raise ValueError("batch must be >= 1 and epochs >= 0")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"dtype must be float64 or float32, got {self.dtype!r}")

    @property
    def adam(self) -> AdamConfig:
        return AdamConfig(self.lr, self.beta1, self.beta2, self.eps)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainResult:
    weights: Weights
    log: list[EpochRecord] = field(default_factory=list)
    # Train-mode loss of the very first batch, before any update.
    initial_loss: float | None = None


def one_hot(labels: np.ndarray, n: int, dtype=np.float64) -> np.ndarray:
    out = np.zeros((labels.size, n), dtype=dtype)
    out[np.arange(labels.size), labels] = 1
    return out


def predict_proba(spec: ModelSpec, weights: Weights, x: np.ndarray,
                  chunk: int = EVAL_CHUNK) -> np.ndarray:
    """Inference-mode class probabilities, evaluated in fixed-order chunks."""
    if x.ndim != 4 or tuple(x.shape[1:]) != spec.input_shape:
        raise ShapeMismatch(f"input {x.shape} does not match model input {spec.input_shape}")
    out = [forward(spec, weights, x[i:i + chunk], train=False)[0]
           for i in range(0, x.shape[0], chunk)]
    return np.concatenate(out) if out else np.zeros((0, spec.n_classes))


def _val_scores(spec, weights, x, y):
    if x is None or len(x) == 0:
        return float("nan"), float("nan")
    p = predict_proba(spec, weights, x)
    loss = float(-np.log(np.clip(p[np.arange(y.size), y], 1e-300, None)).mean())
    return loss, float((p.argmax(axis=1) == y).mean())


def train(spec: ModelSpec, x_train: np.ndarray, y_train, x_val: np.ndarray | None = None,
          y_val=None, config: TrainConfig = TrainConfig(), weights: Weights | None = None,
          progress=None) -> TrainResult:
    """Adam over class-balanced mini-batches, scoring the validation set after every epoch.

    Deterministic given ``config.seed``: it fixes the initial weights, the
    batch schedule of every epoch and the dropout masks of every step.
    ``progress`` is called with each EpochRecord as it completes.
    """
    n_classes = spec.n_classes
    if config.batch % n_classes:
        raise IndivisibleBatch(f"batch {config.batch} is not a multiple of {n_classes} classes")
    dtype = np.dtype(config.dtype)
    y_train = np.asarray(y_train, dtype=np.intp)
    x_train = np.asarray(x_train, dtype=dtype)
    if x_val is not None:
        x_val = np.asarray(x_val, dtype=dtype)
        y_val = np.asarray(y_val, dtype=np.intp)
    if weights is None:
        weights = init_weights(spec, config.seed)
    weights = weights.astype(dtype)
    result = TrainResult(weights)
    opt = AdamState()
    step = 0
    for epoch in range(config.epochs):
        losses = []
        for idx in balanced_batches(y_train, n_classes, config.batch, config.seed, epoch):
            xb = x_train[idx]
            yb = one_hot(y_train[idx], n_classes, dtype)
            _, cache = forward(spec, weights, xb, train=True, seed=[config.seed, step])
            loss, grads = backward(spec, weights, cache, yb)
            if result.initial_loss is None:
                result.initial_loss = loss
            adam_step(weights.params, grads, opt, config.adam)
            losses.append(loss)
            step += 1
        val_loss, val_acc = _val_scores(spec, weights, x_val, y_val)
        record = EpochRecord(epoch + 1, float(np.mean(losses)), val_loss, val_acc)
        result.log.append(record)
        if progress is not None:
            progress(record)
    result.weights = weights.astype(np.float64)
    return result


def evaluate(spec: ModelSpec, weights: Weights, x: np.ndarray, labels, class_names=None,
             healthy_index: int = 0) -> MetricsReport:
    labels = np.asarray(labels, dtype=np.intp)
    pred = predict_proba(spec, weights, np.asarray(x, dtype=np.float64)).argmax(axis=1)
    cm = confusion(labels, pred, spec.n_classes, class_names)
    return report(cm, healthy_index)


def write_log(path: str | Path, records: list[EpochRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss", "val_accuracy"])
        for r in records:
            writer.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.val_accuracy)])
