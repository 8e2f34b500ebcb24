"""Per-ID training and scenario evaluation shared by the CLI and tests."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .detect import DecisionTree, DivergenceScores, divergence_scores, split_calibration_evaluation, tree_fit
from .errors import ValidationError
from .ingest import (
    MessageRecord,
    ScalingParams,
    SignalSeries,
    apply_scaler,
    fit_scaler,
    group_by_id,
    split_train_val,
)
from .metrics import MetricsReport, RocPoint, roc_auc
from .tcna import TcnaConfig, TcnaModel
from .train import TrainConfig, TrainReport, train

logger = logging.getLogger(__name__)


@dataclass
class TrainedDetector:
    model: TcnaModel
    scaler: ScalingParams
    report: TrainReport


def train_message_models(
    records: Sequence[MessageRecord],
    make_config: Callable[[int], TcnaConfig],
    train_config: TrainConfig = TrainConfig(),
) -> dict[str, TrainedDetector]:
    """Scale, split and train one model per message ID (in first-seen order)."""
    groups = group_by_id(records)
    out = {}
    for message_id, recs in groups.items():
        config = make_config(len(recs[0].signals))
        R = config.receptive_field
        split = split_train_val({message_id: recs}, R=R)
        train_series = SignalSeries.from_records(split.train_by_id[message_id])
        val_series = SignalSeries.from_records(split.validation_by_id[message_id])
        scaler = fit_scaler(train_series)
        model = TcnaModel.initialize(config, seed=train_config.seed)
        best, report = train(
            model, apply_scaler(train_series, scaler), apply_scaler(val_series, scaler), train_config
        )
        logger.info("trained %s: best epoch %d of %d", message_id, report.best_epoch, report.stopped_epoch)
        out[message_id] = TrainedDetector(best, scaler, report)
    return out


@dataclass
class ScenarioResult:
    report: MetricsReport
    trees: dict[str, DecisionTree] = field(default_factory=dict)
    scores: dict[str, DivergenceScores] = field(default_factory=dict)
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    predictions: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    probabilities: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def roc(self) -> list[RocPoint] | None:
        if len(np.unique(self.labels)) < 2:
            return None
        return roc_auc(self.labels, self.probabilities)[0]


def evaluate_series(
    detectors: Mapping[str, tuple[TcnaModel, ScalingParams]],
    series_by_id: Mapping[str, SignalSeries],
    calibration_ratio: float = 0.5,
    max_depth: int | None = None,
    scaled: bool = False,
) -> ScenarioResult:
    """DS -> chronological calibration split -> tree per ID -> pooled metrics.

    IDs without any attack label get a single-leaf tree (their calibration
    half cannot contain attacks); an ID whose attacks all fall in the
    evaluation half is an error.
    """
    result = ScenarioResult(MetricsReport.from_predictions([], []))
    labels, preds, probs = [], [], []
    notes = []
    for message_id, series in series_by_id.items():
        if message_id not in detectors:
            raise ValidationError(f"no trained model for message id {message_id!r}")
        model, scaler = detectors[message_id]
        if series.n_signals != model.config.m:
            raise ValidationError(
                f"model for {message_id!r} expects {model.config.m} signals, log has {series.n_signals}"
            )
        if not scaled:
            series = apply_scaler(series, scaler)
        ds = divergence_scores(model, series)
        attacked = bool(ds.labels.any())
        cal, ev = split_calibration_evaluation(ds, calibration_ratio, require_both_classes=attacked)
        if not attacked:
            notes.append(f"{message_id}: no attack labels; single-class tree")
        tree = tree_fit(cal, max_depth=max_depth)
        result.trees[message_id] = tree
        result.scores[message_id] = ds
        if len(ev):
            labels.append(ev.labels)
            preds.append(tree.predict(ev.scores))
            probs.append(tree.predict_proba(ev.scores))
    if labels:
        result.labels = np.concatenate(labels)
        result.predictions = np.concatenate(preds)
        result.probabilities = np.concatenate(probs)
    result.report = MetricsReport.from_predictions(result.labels, result.predictions, result.probabilities)
    result.report.notes = notes + result.report.notes
    return result


def evaluate_log(
    detectors: Mapping[str, tuple[TcnaModel, ScalingParams]],
    records: Sequence[MessageRecord],
    calibration_ratio: float = 0.5,
    max_depth: int | None = None,
) -> ScenarioResult:
    series = {mid: SignalSeries.from_records(recs) for mid, recs in group_by_id(records).items()}
    return evaluate_series(detectors, series, calibration_ratio, max_depth)
