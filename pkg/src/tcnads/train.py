"""Unsupervised next-message training with Adam and early stopping."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InsufficientDataError, NumericError, ShapeError
from .ingest import SignalSeries, SignalWindow, window_arrays
from .tcna import ForwardCache, TcnaModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 256
    learning_rate: float = 1e-4
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1 or self.learning_rate <= 0 or self.patience < 1:
            raise ValueError("batch_size, learning_rate and patience must be positive")
        if self.epochs and self.patience > self.epochs:
            raise ValueError("patience cannot exceed epochs")


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    max_epochs: int = 0

    @property
    def early_stopped(self) -> bool:
        """True when patience ran out before the epoch budget."""
        return 0 < self.stopped_epoch < self.max_epochs

    def best_losses(self) -> tuple[float, float]:
        """(train, validation) loss of the restored best epoch."""
        if not self.best_epoch:
            return float("nan"), float("nan")
        return self.train_loss[self.best_epoch - 1], self.val_loss[self.best_epoch - 1]

    def records(self) -> list[dict]:
        return [
            {"epoch": i + 1, "train_loss": tl, "val_loss": vl}
            for i, (tl, vl) in enumerate(zip(self.train_loss, self.val_loss))
        ]

    def save_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def load_jsonl(cls, path) -> "TrainReport":
        rows = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
        report = cls([r["train_loss"] for r in rows], [r["val_loss"] for r in rows])
        report.stopped_epoch = len(rows)
        if rows:
            report.best_epoch = int(np.argmin(report.val_loss)) + 1
        return report


def mse_last_step(prediction, target) -> float:
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise ShapeError(f"prediction {prediction.shape} and target {target.shape} differ")
    return float(np.mean((prediction - target) ** 2))


def _batch_arrays(batch) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, tuple) and len(batch) == 2:
        return np.asarray(batch[0], float), np.asarray(batch[1], float)
    if batch and isinstance(batch[0], SignalWindow):
        return np.stack([w.values for w in batch]), np.stack([w.target for w in batch])
    raise TypeError("batch must be a list of SignalWindow or an (X, Y) tuple")


def loss_and_gradients(model: TcnaModel, X: np.ndarray, Y: np.ndarray, scale: float = 1.0):
    """Batch-mean MSE and its exact gradient for every parameter."""
    cache = ForwardCache()
    pred = model.forward(X, cache)
    if pred.shape != Y.shape:
        raise ShapeError(f"targets must be {pred.shape}, got {Y.shape}")
    diff = pred - Y
    loss = scale * float(np.mean(diff**2))
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")
    grads = model.backward(cache, scale * 2.0 * diff / diff.size)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
    return loss, grads


def gradients(model: TcnaModel, batch) -> dict[str, np.ndarray]:
    X, Y = _batch_arrays(batch)
    return loss_and_gradients(model, X, Y)[1]


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: Mapping, state: AdamState, lr: float):
    """In-place bias-corrected Adam update; returns (params, state)."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, g in grads.items():
        p = params[name]
        if p.shape != g.shape:
            raise ShapeError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def evaluate_loss(model: TcnaModel, X: np.ndarray, Y: np.ndarray, batch_size: int = 4096) -> float:
    total = 0.0
    for lo in range(0, len(X), batch_size):
        pred = model.forward(X[lo : lo + batch_size])
        total += float(np.sum(np.mean((pred - Y[lo : lo + batch_size]) ** 2, axis=1)))
    return total / len(X)


def _to_windows(data, R: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, tuple) and len(data) == 2:
        return np.asarray(data[0], float), np.asarray(data[1], float)
    if isinstance(data, SignalSeries):
        return window_arrays(data.values, R, data.message_id)
    if isinstance(data, Sequence) and data and isinstance(data[0], SignalWindow):
        return _batch_arrays(list(data))
    return window_arrays(np.asarray(data, float), R)


def train(model: TcnaModel, train_data, val_data, config: TrainConfig = TrainConfig()):
    """Fit ``model`` on scaled training windows; returns (best model, report).

    ``train_data``/``val_data`` may be scaled SignalSeries, (T, m) arrays,
    SignalWindow lists or ready (X, Y) window arrays. The input model is not
    modified.
    """
    R = model.config.receptive_field
    X_tr, Y_tr = _to_windows(train_data, R)
    X_va, Y_va = _to_windows(val_data, R)
    if len(X_tr) == 0 or len(X_va) == 0:
        raise InsufficientDataError("training and validation data must each yield at least one window")

    report = TrainReport(max_epochs=config.epochs)
    current = model.copy()
    if config.epochs == 0:
        return current, report

    rng = np.random.default_rng(config.seed)
    state = AdamState()
    best = current.copy()
    best_val = np.inf
    wait = 0
    n = len(X_tr)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        running = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            loss, grads = loss_and_gradients(current, X_tr[idx], Y_tr[idx])
            running += loss * len(idx)
            adam_step(current.params, grads, state, config.learning_rate)
        train_loss = running / n
        val_loss = evaluate_loss(current, X_va, Y_va)
        if not np.isfinite(val_loss):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")
        report.train_loss.append(train_loss)
        report.val_loss.append(val_loss)
        report.stopped_epoch = epoch
        logger.debug("epoch %d train %.3e val %.3e", epoch, train_loss, val_loss)

        if val_loss < best_val:
            best_val = val_loss
            best = current.copy()
            report.best_epoch = epoch
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                logger.info("early stop at epoch %d (best %d)", epoch, report.best_epoch)
                break
    return best, report
