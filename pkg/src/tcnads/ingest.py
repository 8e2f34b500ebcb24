"""Message-log ingestion: CSV parsing, per-ID grouping, min-max scaling,
chronological splitting and rolling windows.

Logs use the column layout ``label,time,id,signal1..signal4``. Every message
ID is modelled independently, so most helpers here take or return the
records of one ID.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InsufficientDataError, ParseError, ShapeError, ValidationError

CSV_HEADER = ("label", "time", "id", "signal1", "signal2", "signal3", "signal4")
MAX_SIGNALS = len(CSV_HEADER) - 3
TRAIN_FRACTION = 0.85


@dataclass(frozen=True)
class MessageRecord:
    timestamp: float
    message_id: str
    signals: tuple[float, ...]
    label: int = 0

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValidationError(f"label must be 0 or 1, got {self.label!r}")


@dataclass(frozen=True)
class ScalingParams:
    """Per-signal training extrema of one message ID."""

    message_id: str
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64)
        hi = np.asarray(self.max, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ShapeError("min and max must be 1-D arrays of equal length")
        if np.any(hi < lo):
            raise ValidationError(f"max < min for message {self.message_id!r}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    def to_json(self) -> dict:
        return {"id": self.message_id, "min": self.min.tolist(), "max": self.max.tolist()}

    @classmethod
    def from_json(cls, doc: Mapping) -> "ScalingParams":
        return cls(str(doc["id"]), np.asarray(doc["min"], float), np.asarray(doc["max"], float))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ScalingParams":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class SignalSeries:
    """Array view of one message ID's records, in log order."""

    message_id: str
    timestamps: np.ndarray
    values: np.ndarray  # (T, m)
    labels: np.ndarray  # (T,)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.values.ndim != 2:
            raise ShapeError("series values must be a (T, m) matrix")
        n = len(self.values)
        if len(self.timestamps) != n or len(self.labels) != n:
            raise ShapeError("timestamps, values and labels must have equal length")

    def __len__(self):
        return len(self.values)

    @property
    def n_signals(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "SignalSeries":
        return SignalSeries(self.message_id, self.timestamps.copy(), self.values.copy(), self.labels.copy())

    @classmethod
    def from_records(cls, records: Sequence[MessageRecord]) -> "SignalSeries":
        if not records:
            raise InsufficientDataError("cannot build a series from zero records")
        ids = {r.message_id for r in records}
        if len(ids) != 1:
            raise ValidationError(f"series needs records of a single ID, got {sorted(ids)}")
        widths = {len(r.signals) for r in records}
        if len(widths) != 1:
            raise ValidationError(f"inconsistent signal count for {records[0].message_id!r}: {sorted(widths)}")
        return cls(
            records[0].message_id,
            np.array([r.timestamp for r in records]),
            np.array([r.signals for r in records], dtype=np.float64),
            np.array([r.label for r in records]),
        )

    def to_records(self) -> list[MessageRecord]:
        return [
            MessageRecord(float(t), self.message_id, tuple(float(v) for v in row), int(lab))
            for t, row, lab in zip(self.timestamps, self.values, self.labels)
        ]


@dataclass(frozen=True)
class SignalWindow:
    values: np.ndarray  # (R, m)
    start_index: int
    target: np.ndarray  # (m,)


@dataclass
class DatasetSplit:
    train: list[MessageRecord]
    validation: list[MessageRecord]
    train_by_id: dict[str, list[MessageRecord]] = field(default_factory=dict)
    validation_by_id: dict[str, list[MessageRecord]] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# CSV I/O


def _parse_float(text: str, what: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"non-numeric {what} {text!r}", line) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite {what} {text!r}", line)
    return value


def parse_row(row: Sequence[str], line: int) -> MessageRecord:
    if len(row) != len(CSV_HEADER):
        raise ParseError(f"expected {len(CSV_HEADER)} columns, got {len(row)}", line)
    label_text, time_text, message_id, *signal_texts = row
    try:
        label = int(label_text)
    except ValueError:
        raise ParseError(f"non-integer label {label_text!r}", line) from None
    if label not in (0, 1):
        raise ValidationError(f"line {line}: label must be 0 or 1, got {label}")
    timestamp = _parse_float(time_text, "time", line)
    if not message_id:
        raise ParseError("empty message id", line)

    while signal_texts and signal_texts[-1] == "":
        signal_texts.pop()
    signals = tuple(_parse_float(s, "signal", line) for s in signal_texts)
    return MessageRecord(timestamp, message_id, signals, label)


def load_log(path, format: str = "csv") -> list[MessageRecord]:
    """Read a message log. Records come back in file order."""
    if format != "csv":
        raise ValueError(f"unsupported log format {format!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("missing header row", 1)
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(f"header must be {','.join(CSV_HEADER)}", 1)
        return [parse_row(row, reader.line_num) for row in reader if row]


def format_float(value: float) -> str:
    return repr(float(value))


def write_log(records: Iterable[MessageRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for rec in records:
            if len(rec.signals) > MAX_SIGNALS:
                raise ValidationError(f"{rec.message_id!r} has {len(rec.signals)} signals, format allows {MAX_SIGNALS}")
            padding = [""] * (MAX_SIGNALS - len(rec.signals))
            writer.writerow(
                [str(rec.label), format_float(rec.timestamp), rec.message_id]
                + [format_float(s) for s in rec.signals]
                + padding
            )


# ---------------------------------------------------------------------------
# grouping, scaling, splitting


def group_by_id(records: Iterable[MessageRecord]) -> dict[str, list[MessageRecord]]:
    groups: dict[str, list[MessageRecord]] = {}
    widths: dict[str, int] = {}
    for rec in records:
        width = widths.setdefault(rec.message_id, len(rec.signals))
        if width != len(rec.signals):
            raise ValidationError(
                f"message {rec.message_id!r} has {len(rec.signals)} signals, expected {width}"
            )
        groups.setdefault(rec.message_id, []).append(rec)
    return groups


def _as_series(data) -> SignalSeries:
    if isinstance(data, SignalSeries):
        return data
    return SignalSeries.from_records(list(data))


def fit_scaler(train) -> ScalingParams:
    """Column-wise extrema of one ID's training records (or series)."""
    series = _as_series(train)
    return ScalingParams(series.message_id, series.values.min(axis=0), series.values.max(axis=0))


def scale_values(values: np.ndarray, params: ScalingParams) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != len(params.min):
        raise ShapeError(f"expected {len(params.min)} signals, got {values.shape[-1]}")
    span = params.max - params.min
    degenerate = span == 0
    # constant training columns map to 0; nothing is clamped
    scaled = (values - params.min) / np.where(degenerate, 1.0, span)
    return np.where(degenerate, 0.0, scaled)


def apply_scaler(records, params: ScalingParams):
    """Scale a record list or a SignalSeries, returning the same kind."""
    if isinstance(records, SignalSeries):
        if records.message_id != params.message_id:
            raise ValidationError(f"scaler fitted for {params.message_id!r}, not {records.message_id!r}")
        return SignalSeries(records.message_id, records.timestamps, scale_values(records.values, params), records.labels)
    out = []
    for rec in records:
        if rec.message_id != params.message_id:
            raise ValidationError(f"scaler fitted for {params.message_id!r}, not {rec.message_id!r}")
        scaled = scale_values(np.array(rec.signals, dtype=np.float64), params)
        out.append(MessageRecord(rec.timestamp, rec.message_id, tuple(float(v) for v in scaled), rec.label))
    return out


def subsequence_length(k: int, l: int) -> int:
    """Window length (k - 1) * 2**l that exactly covers a dilated causal stack."""
    if not (isinstance(k, (int, np.integer)) and isinstance(l, (int, np.integer))):
        raise TypeError("kernel size and layer count must be integers")
    if k < 2 or l < 1:
        raise ValueError(f"need k >= 2 and l >= 1, got k={k}, l={l}")
    return (k - 1) * 2**l


def layers_for_receptive_field(R: int, k: int = 2) -> int:
    """Inverse of subsequence_length; raises if R is not reachable."""
    if R < 1 or R % (k - 1):
        raise ValueError(f"receptive field {R} not expressible with kernel size {k}")
    q = R // (k - 1)
    l = q.bit_length() - 1
    if l < 1 or 2**l != q:
        raise ValueError(f"receptive field {R} is not (k-1)*2^l for kernel size {k}")
    return l


def window_arrays(values: np.ndarray, R: int, message_id: str = "?") -> tuple[np.ndarray, np.ndarray]:
    """Stacked windows (T-R, R, m) and their next-step targets (T-R, m)."""
    values = np.asarray(values, dtype=np.float64)
    T = len(values)
    if T < R + 1:
        raise InsufficientDataError(f"message {message_id!r}: {T} records, need at least {R + 1} for R={R}")
    view = np.lib.stride_tricks.sliding_window_view(values, R, axis=0)  # (T-R+1, m, R)
    windows = np.ascontiguousarray(view[: T - R].transpose(0, 2, 1))
    return windows, values[R:].copy()


def make_windows(series, R: int, message_id: str | None = None) -> list[SignalWindow]:
    if isinstance(series, SignalSeries):
        message_id = message_id or series.message_id
        series = series.values
    X, Y = window_arrays(series, R, message_id or "?")
    return [SignalWindow(X[i], i, Y[i]) for i in range(len(X))]


def split_train_val(
    records: Mapping[str, Sequence[MessageRecord]] | Sequence[MessageRecord],
    R: int | None = None,
    fraction: float = TRAIN_FRACTION,
) -> DatasetSplit:
    """Chronological per-ID split: the first ceil(fraction*T) records train."""
    if not isinstance(records, Mapping):
        records = group_by_id(records)
    split = DatasetSplit([], [])
    for message_id, recs in records.items():
        recs = list(recs)
        if any(r.label != 0 for r in recs):
            raise ValidationError(f"training data for {message_id!r} contains attack labels")
        if any(b.timestamp < a.timestamp for a, b in zip(recs, recs[1:])):
            raise ValidationError(f"records for {message_id!r} are not chronologically ordered")
        # round first: 0.85 * 100 is 85.00000000000001 in binary floating point
        cut = math.ceil(round(fraction * len(recs), 9))
        head, tail = recs[:cut], recs[cut:]
        if R is not None:
            for name, part in (("train", head), ("validation", tail)):
                if len(part) < R + 1:
                    raise InsufficientDataError(
                        f"message {message_id!r}: {name} split has {len(part)} records, need {R + 1}"
                    )
        split.train_by_id[message_id] = head
        split.validation_by_id[message_id] = tail
        split.train.extend(head)
        split.validation.extend(tail)
    return split
