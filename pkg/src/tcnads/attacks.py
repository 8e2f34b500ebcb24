"""Attack injection for clean per-ID signal series.

Four attack kinds are supported:

* ``plateau``: hold the targeted signals at a constant value.
* ``suppress``: delete messages; the first surviving message(s) after the
  gap carry the attack label, since a deleted message cannot.
* ``continuous``: ramp the targeted signals from their true value to a
  target, reaching it on the last attacked message.
* ``playback``: replay an earlier span of the same signals.

Every injector returns a new series; the input is never modified. Indices
refer to positions in the per-ID series, not timestamps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import InsufficientDataError
from .ingest import SignalSeries

KINDS = ("plateau", "suppress", "continuous", "playback")

RAMPS: dict[str, Callable[[np.ndarray, int], np.ndarray]] = {
    "linear": lambda j, n: (j + 1) / n,
    "quadratic": lambda j, n: ((j + 1) / n) ** 2,
    "smoothstep": lambda j, n: 3 * ((j + 1) / n) ** 2 - 2 * ((j + 1) / n) ** 3,
}


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    message_id: str
    signal_indices: tuple[int, ...] = (0,)
    start: int = 0
    duration: int = 1
    value: float | None = None
    offset: float = 0.0
    source_start: int | None = None
    ramp: str = "linear"
    post_gap_labels: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "signal_indices", tuple(int(i) for i in self.signal_indices))
        if self.kind not in KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}; expected one of {KINDS}")
        if self.start < 0 or self.duration < 1:
            raise ValueError(f"attack needs start >= 0 and duration >= 1, got {self.start}, {self.duration}")
        if self.kind == "playback" and self.source_start is None:
            raise ValueError("playback attack needs a source_start")
        if self.kind == "continuous" and self.ramp not in RAMPS:
            raise ValueError(f"unknown ramp {self.ramp!r}; expected one of {sorted(RAMPS)}")

    @property
    def stop(self) -> int:
        return self.start + self.duration

    def validate(self, series: SignalSeries) -> None:
        n = len(series)
        if self.stop > n:
            raise ValueError(f"attack span [{self.start}, {self.stop}) exceeds series length {n}")
        if self.kind != "suppress":
            if not self.signal_indices:
                raise ValueError("attack targets no signals")
            bad = [i for i in self.signal_indices if not 0 <= i < series.n_signals]
            if bad:
                raise ValueError(f"signal indices {bad} out of range for {series.n_signals} signals")
        if self.kind == "playback":
            src = self.source_start
            if src < 0 or src + self.duration > self.start:
                raise ValueError(
                    f"playback source [{src}, {src + self.duration}) must lie before the attack start {self.start}"
                )

    def to_json(self) -> dict:
        doc = {
            "kind": self.kind,
            "id": self.message_id,
            "signals": list(self.signal_indices),
            "start": self.start,
            "duration": self.duration,
        }
        if self.value is not None:
            doc["value"] = self.value
        if self.offset:
            doc["offset"] = self.offset
        if self.source_start is not None:
            doc["source_start"] = self.source_start
        if self.kind == "continuous" and self.ramp != "linear":
            doc["ramp"] = self.ramp
        if self.post_gap_labels is not None:
            doc["post_gap_labels"] = self.post_gap_labels
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "AttackSpec":
        known = {"kind", "id", "signals", "start", "duration", "value", "offset", "source_start", "ramp", "post_gap_labels"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown attack spec keys {sorted(unknown)}")
        return cls(
            kind=doc["kind"],
            message_id=str(doc["id"]),
            signal_indices=tuple(doc.get("signals", (0,))),
            start=int(doc["start"]),
            duration=int(doc["duration"]),
            value=None if doc.get("value") is None else float(doc["value"]),
            offset=float(doc.get("offset", 0.0)),
            source_start=None if doc.get("source_start") is None else int(doc["source_start"]),
            ramp=doc.get("ramp", "linear"),
            post_gap_labels=None if doc.get("post_gap_labels") is None else int(doc["post_gap_labels"]),
        )


def load_attack_specs(path) -> list[AttackSpec]:
    docs = json.loads(Path(path).read_text())
    if not isinstance(docs, list):
        raise ValueError("attack spec file must hold a JSON list")
    return [AttackSpec.from_json(d) for d in docs]


def save_attack_specs(specs: Iterable[AttackSpec], path) -> None:
    Path(path).write_text(json.dumps([s.to_json() for s in specs], indent=2) + "\n")


def _reference_values(series: SignalSeries, spec: AttackSpec) -> np.ndarray:
    """True signal values just before the attack (at start for start = 0)."""
    row = series.values[max(spec.start - 1, 0)]
    return row[list(spec.signal_indices)]


def _target_values(series: SignalSeries, spec: AttackSpec) -> np.ndarray:
    cols = len(spec.signal_indices)
    if spec.value is not None:
        return np.full(cols, spec.value + spec.offset)
    return _reference_values(series, spec) + spec.offset


def inject_plateau(series: SignalSeries, spec: AttackSpec) -> SignalSeries:
    """Freeze the targeted signals at ``value`` (default: value at start-1) plus ``offset``."""
    spec.validate(series)
    out = series.copy()
    cols = list(spec.signal_indices)
    out.values[spec.start : spec.stop, cols] = _target_values(series, spec)
    out.labels[spec.start : spec.stop] = 1
    return out


def inject_suppress(
    series: SignalSeries,
    spec: AttackSpec,
    post_gap_labels: int | None = None,
    min_length: int | None = None,
) -> SignalSeries:
    """Delete messages [start, stop) and label the first survivors after the gap."""
    spec.validate(series)
    n_label = post_gap_labels if post_gap_labels is not None else spec.post_gap_labels
    n_label = 1 if n_label is None else n_label
    if n_label < 0:
        raise ValueError("post_gap_labels must be non-negative")
    keep = np.ones(len(series), dtype=bool)
    keep[spec.start : spec.stop] = False
    out = SignalSeries(series.message_id, series.timestamps[keep], series.values[keep], series.labels[keep])
    if min_length is not None and len(out) < min_length:
        raise InsufficientDataError(
            f"suppressing {spec.duration} messages leaves {len(out)} records for {series.message_id!r}, "
            f"need {min_length}"
        )
    out.labels[spec.start : spec.start + n_label] = 1
    return out


def inject_continuous(series: SignalSeries, spec: AttackSpec) -> SignalSeries:
    """s'_j = s_j + ramp(j) * (target - s_j), ramp(duration - 1) = 1."""
    spec.validate(series)
    out = series.copy()
    cols = list(spec.signal_indices)
    target = _target_values(series, spec)
    frac = RAMPS[spec.ramp](np.arange(spec.duration, dtype=np.float64), spec.duration)[:, None]
    true = series.values[spec.start : spec.stop][:, cols]
    ramped = true + frac * (target - true)
    ramped[-1] = target  # exact endpoint regardless of rounding in the ramp
    out.values[spec.start : spec.stop, cols] = ramped
    out.labels[spec.start : spec.stop] = 1
    return out


def inject_playback(series: SignalSeries, spec: AttackSpec) -> SignalSeries:
    spec.validate(series)
    out = series.copy()
    cols = list(spec.signal_indices)
    src = spec.source_start
    out.values[spec.start : spec.stop, cols] = series.values[src : src + spec.duration][:, cols]
    out.labels[spec.start : spec.stop] = 1
    return out


INJECTORS = {
    "plateau": inject_plateau,
    "continuous": inject_continuous,
    "playback": inject_playback,
}


def inject(series: SignalSeries, spec: AttackSpec, post_gap_labels: int | None = None, min_length: int | None = None):
    if spec.message_id != series.message_id:
        raise ValueError(f"attack targets {spec.message_id!r}, series is {series.message_id!r}")
    if spec.kind == "suppress":
        return inject_suppress(series, spec, post_gap_labels, min_length)
    return INJECTORS[spec.kind](series, spec)


@dataclass
class InjectionSummary:
    spec: AttackSpec
    labeled: int
    removed: int = 0

    def to_json(self) -> dict:
        return {**self.spec.to_json(), "labeled": self.labeled, "removed": self.removed}


def apply_attacks(
    series_by_id: Mapping[str, SignalSeries],
    specs: Sequence[AttackSpec],
    post_gap_labels: int | None = None,
    min_length: int | None = None,
) -> tuple[dict[str, SignalSeries], list[InjectionSummary]]:
    """Apply several attacks. Spans of one ID must not overlap.

    Attacks on the same ID are applied latest-first so that every spec's
    indices (and playback sources) refer to the original clean series.
    """
    out = dict(series_by_id)
    by_id: dict[str, list[AttackSpec]] = {}
    for spec in specs:
        if spec.message_id not in out:
            raise ValueError(f"attack targets unknown message id {spec.message_id!r}")
        by_id.setdefault(spec.message_id, []).append(spec)

    summaries = []
    for message_id, group in by_id.items():
        group = sorted(group, key=lambda s: s.start)
        for a, b in zip(group, group[1:]):
            if b.start < a.stop:
                raise ValueError(f"overlapping attacks on {message_id!r}: {a.to_json()} and {b.to_json()}")
        series = out[message_id]
        for spec in reversed(group):
            before = int(series.labels.sum())
            n_before = len(series)
            series = inject(series, spec, post_gap_labels, min_length)
            summaries.append(
                InjectionSummary(spec, int(series.labels.sum()) - before, n_before - len(series))
            )
        out[message_id] = series
    summaries.reverse()
    return out, summaries
