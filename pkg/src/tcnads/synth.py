"""Deterministic synthetic message logs for desk-scale experiments."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .ingest import MAX_SIGNALS, MessageRecord

SIGNAL_KINDS = ("sine", "sawtooth", "random-walk", "constant")


@dataclass(frozen=True)
class SignalGenerator:
    """One signal column.

    ``sine``: amplitude * sin(2 pi t / period + phase)
    ``sawtooth``: amplitude * (2 frac(t / period + phase / 2 pi) - 1)
    ``random-walk``: cumulative sum of N(0, amplitude) steps
    ``constant``: amplitude
    Gaussian noise of ``noise_std`` is added on top; ``offset`` shifts the level.
    """

    kind: str = "sine"
    period: float = 50.0
    amplitude: float = 1.0
    phase: float = 0.0
    noise_std: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}; expected one of {SIGNAL_KINDS}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.kind in ("sine", "sawtooth") and self.period <= 0:
            raise ValueError("period must be positive")

    def render(self, t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "sine":
            x = self.amplitude * np.sin(2 * np.pi * t / self.period + self.phase)
        elif self.kind == "sawtooth":
            frac = np.mod(t / self.period + self.phase / (2 * np.pi), 1.0)
            x = self.amplitude * (2 * frac - 1)
        elif self.kind == "random-walk":
            x = np.cumsum(rng.normal(0.0, abs(self.amplitude), size=len(t)))
        else:
            x = np.full(len(t), float(self.amplitude))
        if self.noise_std:
            x = x + rng.normal(0.0, self.noise_std, size=len(t))
        return x + self.offset


@dataclass(frozen=True)
class GeneratorSpec:
    message_id: str
    signals: tuple[SignalGenerator, ...] = field(default_factory=lambda: (SignalGenerator(),))
    length: int = 1000
    seed: int = 0
    interval: float = 0.01
    t0: float = 0.0
    start_step: int = 0

    def __post_init__(self):
        object.__setattr__(self, "signals", tuple(self.signals))
        if not 1 <= len(self.signals) <= MAX_SIGNALS:
            raise ValueError(f"need 1..{MAX_SIGNALS} signals, got {len(self.signals)}")
        if self.length < 1:
            raise ValueError("length must be positive")
        if self.interval <= 0:
            raise ValueError("interval must be positive")

    def validate_for(self, R: int) -> None:
        if self.length < R + 1:
            raise ValueError(f"{self.message_id!r}: length {self.length} below R + 1 = {R + 1}")

    @classmethod
    def from_json(cls, doc: Mapping) -> "GeneratorSpec":
        return cls(
            message_id=str(doc["id"]),
            signals=tuple(SignalGenerator(**s) for s in doc.get("signals", [{}])),
            length=int(doc.get("length", 1000)),
            seed=int(doc.get("seed", 0)),
            interval=float(doc.get("interval", 0.01)),
            t0=float(doc.get("t0", 0.0)),
            start_step=int(doc.get("start_step", 0)),
        )

    def to_json(self) -> dict:
        return {
            "id": self.message_id,
            "signals": [s.__dict__.copy() for s in self.signals],
            "length": self.length,
            "seed": self.seed,
            "interval": self.interval,
            "t0": self.t0,
            "start_step": self.start_step,
        }


def load_generator_specs(path) -> list[GeneratorSpec]:
    doc = json.loads(Path(path).read_text())
    docs = doc if isinstance(doc, list) else [doc]
    return [GeneratorSpec.from_json(d) for d in docs]


def generate_values(spec: GeneratorSpec) -> np.ndarray:
    """Raw (length, n_signals) signal matrix; step t starts at ``start_step``."""
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.start_step, spec.start_step + spec.length, dtype=np.float64)
    return np.stack([g.render(t, rng) for g in spec.signals], axis=1)


def generate(spec: GeneratorSpec) -> list[MessageRecord]:
    values = generate_values(spec)
    times = spec.t0 + spec.interval * np.arange(spec.start_step, spec.start_step + spec.length)
    return [
        MessageRecord(float(t), spec.message_id, tuple(float(v) for v in row), 0)
        for t, row in zip(times, values)
    ]


def generate_log(specs: Sequence[GeneratorSpec]) -> list[MessageRecord]:
    """Interleave several IDs by timestamp (ties keep spec order)."""
    records = []
    for order, spec in enumerate(specs):
        records += [(r.timestamp, order, i, r) for i, r in enumerate(generate(spec))]
    records.sort(key=lambda item: item[:3])
    return [r for *_, r in records]
