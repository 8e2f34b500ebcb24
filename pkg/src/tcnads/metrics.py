"""Confusion-matrix metrics, ROC/AUC and model overhead measurements.

MCC uses the standard product form ``tp*tn - fp*fn`` in the numerator and
returns 0 when any factor under the square root is zero.
"""

from __future__ import annotations

import csv
import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ShapeError, UndefinedMetricError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)


def _binary(a, name) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 1:
        raise ShapeError(f"{name} must be 1-D")
    if a.size and not np.all((a == 0) | (a == 1)):
        raise ValueError(f"{name} must contain only 0 and 1")
    return a.astype(bool)


def confusion(labels, predictions) -> ConfusionCounts:
    y = _binary(labels, "labels")
    p = _binary(predictions, "predictions")
    if y.shape != p.shape:
        raise ShapeError(f"labels ({len(y)}) and predictions ({len(p)}) differ in length")
    return ConfusionCounts(
        tp=int(np.sum(y & p)),
        tn=int(np.sum(~y & ~p)),
        fp=int(np.sum(~y & p)),
        fn=int(np.sum(y & ~p)),
    )


def accuracy(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise UndefinedMetricError("accuracy of zero samples")
    return (c.tp + c.tn) / c.total


def tpr(c: ConfusionCounts) -> float:
    if c.tp + c.fn == 0:
        raise UndefinedMetricError("true positive rate without positive samples")
    return c.tp / (c.tp + c.fn)


def fpr(c: ConfusionCounts) -> float:
    if c.fp + c.tn == 0:
        raise UndefinedMetricError("false positive rate without negative samples")
    return c.fp / (c.fp + c.tn)


def fnr(c: ConfusionCounts) -> float:
    if c.fn + c.tp == 0:
        raise UndefinedMetricError("false negative rate without positive samples")
    return c.fn / (c.fn + c.tp)


def mcc(c: ConfusionCounts) -> float:
    denom = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if denom == 0:
        return 0.0
    # integer numerator and denominator keep this exact up to the final sqrt
    return (c.tp * c.tn - c.fp * c.fn) / math.sqrt(denom)


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    tpr: float
    fpr: float


def roc_curve(labels, scores) -> list[RocPoint]:
    """Operating points for "attack if score >= threshold", from +inf down to -inf."""
    y = _binary(labels, "labels")
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != y.shape:
        raise ShapeError("labels and scores differ in length")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC needs both classes present")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    # last position of each distinct score in descending order
    ends = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    tps = np.cumsum(y_sorted)[ends]
    fps = (ends + 1) - tps
    points = [RocPoint(math.inf, 0.0, 0.0)]
    points += [RocPoint(float(s_sorted[e]), tp / n_pos, fp / n_neg) for e, tp, fp in zip(ends, tps, fps)]
    points.append(RocPoint(-math.inf, 1.0, 1.0))
    return points


def auc_trapezoid(points: list[RocPoint]) -> float:
    area = 0.0
    for a, b in zip(points, points[1:]):
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0
    return area


def roc_auc(labels, scores) -> tuple[list[RocPoint], float]:
    curve = roc_curve(labels, scores)
    return curve, auc_trapezoid(curve)


def write_roc_csv(points: list[RocPoint], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["threshold", "fpr", "tpr"])
        for p in points:
            writer.writerow([repr(p.threshold), repr(p.fpr), repr(p.tpr)])


# ---------------------------------------------------------------------------
# reports


def _safe(fn, *args):
    try:
        return fn(*args), None
    except UndefinedMetricError as exc:
        return None, str(exc)


@dataclass
class MetricsReport:
    counts: ConfusionCounts
    accuracy: float | None
    fnr: float | None
    mcc: float
    roc_auc: float | None
    roc_points: int = 0
    notes: list[str] = field(default_factory=list)
    breakdown: dict[str, "MetricsReport"] = field(default_factory=dict)

    @classmethod
    def from_predictions(cls, labels, predictions, probabilities=None) -> "MetricsReport":
        c = confusion(labels, predictions)
        notes = []
        acc, note = _safe(accuracy, c)
        notes += [note] if note else []
        rate, note = _safe(fnr, c)
        notes += [note] if note else []
        auc, n_points = None, 0
        if probabilities is not None:
            result, note = _safe(roc_auc, labels, probabilities)
            if result is None:
                notes.append(note)
            else:
                auc, n_points = result[1], len(result[0])
        return cls(c, acc, rate, mcc(c), auc, n_points, notes)

    def to_json(self) -> dict:
        doc = {
            "counts": asdict(self.counts),
            "accuracy": self.accuracy,
            "fnr": self.fnr,
            "mcc": self.mcc,
            "roc_auc": self.roc_auc,
            "roc_points": self.roc_points,
        }
        if self.notes:
            doc["notes"] = list(self.notes)
        if self.breakdown:
            doc["breakdown"] = {k: v.to_json() for k, v in self.breakdown.items()}
        return doc

    def rows(self, scenario: str = "all") -> list[tuple[str, str, object]]:
        """Flat (scenario, metric, value) rows, breakdown first."""
        out = []
        for name, sub in self.breakdown.items():
            out += sub.rows(name)
        for metric in ("accuracy", "fnr", "mcc", "roc_auc"):
            out.append((scenario, metric, getattr(self, metric)))
        for key, value in asdict(self.counts).items():
            out.append((scenario, key, value))
        return out


def write_metrics_csv(report: MetricsReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scenario", "metric", "value"])
        for scenario, metric, value in report.rows():
            writer.writerow([scenario, metric, "" if value is None else value])


def write_metrics_json(report: MetricsReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# overhead


@dataclass
class OverheadReport:
    parameter_count: int
    serialized_bytes: int
    latency_us_mean: float
    latency_us_median: float
    latency_us_p99: float
    latency_us_min: float
    samples: int

    def to_json(self) -> dict:
        return asdict(self)


def overhead_report(model, tree, window, target, samples: int = 10_000, warmup: int = 100) -> OverheadReport:
    """Parameter count, JSON size and single-window detect latency.

    Each timed sample runs one forward pass, the divergence score and one
    tree traversal on ``window`` (shape (R, m)) with next message ``target``.
    """
    from .tcna import parameter_count

    window = np.asarray(window, dtype=np.float64)[None]
    target = np.asarray(target, dtype=np.float64)
    model_bytes = len((json.dumps(model.to_json()) + "\n").encode())
    tree_bytes = len((json.dumps(tree.to_json()) + "\n").encode()) if tree is not None else 0

    def once():
        ds = model.forward(window)[0] - target
        if tree is not None:
            tree.predict_one(ds)

    for _ in range(warmup):
        once()
    timings = []
    clock = time.perf_counter_ns
    for _ in range(samples):
        t0 = clock()
        once()
        timings.append((clock() - t0) / 1000.0)
    timings.sort()
    p99 = timings[min(len(timings) - 1, math.ceil(0.99 * len(timings)) - 1)]
    return OverheadReport(
        parameter_count=parameter_count(model),
        serialized_bytes=model_bytes + tree_bytes,
        latency_us_mean=statistics.fmean(timings),
        latency_us_median=statistics.median(timings),
        latency_us_p99=p99,
        latency_us_min=timings[0],
        samples=samples,
    )
