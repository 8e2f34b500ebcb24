"""Command-line driver: ``tcnads {generate,train,inject,evaluate,sweep}``.

Configuration is a flat JSON object (see README for the schema). Paths may
be overridden with ``TCNADS_OUT``, ``TCNADS_TRAIN_LOG``, ``TCNADS_TEST_LOG``
and ``TCNADS_ATTACKS``. On failure a one-line JSON error goes to stderr and
the exit code is 1.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import attacks as attacks_mod
from .errors import ValidationError
from .ingest import (
    ScalingParams,
    SignalSeries,
    group_by_id,
    layers_for_receptive_field,
    load_log,
    window_arrays,
    apply_scaler,
    write_log,
)
from .metrics import MetricsReport, overhead_report, write_metrics_csv, write_metrics_json, write_roc_csv
from .pipeline import evaluate_series, train_message_models
from .synth import GeneratorSpec, generate_log
from .tcna import TcnaConfig, TcnaModel
from .train import TrainConfig

logger = logging.getLogger("tcnads")

ENV_OVERRIDES = {
    "TCNADS_OUT": "out",
    "TCNADS_TRAIN_LOG": "train_log",
    "TCNADS_TEST_LOG": "test_log",
    "TCNADS_ATTACKS": "attacks",
}


@dataclass
class PipelineConfig:
    out: str = "artifacts"
    train_log: str | None = None
    test_log: str | None = None
    attacks: str | None = None
    generators: list = field(default_factory=list)
    test_length: int | None = None
    # network
    kernel_size: int = 2
    receptive_field: int | None = None
    block_layers: list | None = None
    channel_multiplier: int = 3
    # training
    epochs: int = 200
    batch_size: int = 256
    learning_rate: float = 1e-4
    patience: int = 10
    # evaluation
    calibration_ratio: float = 0.5
    post_gap_labels: int = 1
    max_depth: int | None = None
    latency_samples: int = 10_000
    figures: bool = True
    # sweep
    receptive_fields: list = field(default_factory=lambda: [16, 32, 64, 128])
    seed: int = 0

    @classmethod
    def load(cls, path: str | None, env=os.environ) -> "PipelineConfig":
        doc = {}
        if path:
            doc = json.loads(Path(path).read_text())
            if not isinstance(doc, dict):
                raise ValidationError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        for var, key in ENV_OVERRIDES.items():
            if env.get(var):
                doc[key] = env[var]
        config = cls(**doc)
        config.tcna_config(1)  # consistency check on R vs layers
        return config

    # -- derived ------------------------------------------------------------

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def train_log_path(self) -> Path:
        return Path(self.train_log) if self.train_log else self.out_dir / "train.csv"

    @property
    def test_log_path(self) -> Path:
        return Path(self.test_log) if self.test_log else self.out_dir / "test.csv"

    @property
    def models_dir(self) -> Path:
        return self.out_dir / "models"

    @property
    def reports_dir(self) -> Path:
        return self.out_dir / "reports"

    @property
    def attacked_dir(self) -> Path:
        return self.out_dir / "attacked"

    def tcna_config(self, m: int, receptive_field: int | None = None) -> TcnaConfig:
        R = receptive_field or self.receptive_field
        if self.block_layers is not None and receptive_field is None:
            config = TcnaConfig(m, self.kernel_size, tuple(self.block_layers), self.channel_multiplier)
            if R is not None and config.receptive_field != R:
                raise ValidationError(
                    f"receptive_field {R} inconsistent with block_layers {self.block_layers} "
                    f"(which give {config.receptive_field})"
                )
            return config
        if R is None:
            return TcnaConfig(m, self.kernel_size, (2, 2, 2), self.channel_multiplier)
        return TcnaConfig.for_receptive_field(
            m, R, kernel_size=self.kernel_size, channel_multiplier=self.channel_multiplier
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.learning_rate, self.patience, self.seed)


# ---------------------------------------------------------------------------
# artifact layout


def safe_name(message_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", message_id)


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n")


def save_detectors(config: PipelineConfig, trained) -> dict:
    config.models_dir.mkdir(parents=True, exist_ok=True)
    index = {}
    for message_id, det in trained.items():
        stem = safe_name(message_id)
        det.model.save(config.models_dir / f"{stem}.model.json")
        det.scaler.save(config.models_dir / f"{stem}.scaler.json")
        index[message_id] = {"model": f"{stem}.model.json", "scaler": f"{stem}.scaler.json"}
    _write_json(config.models_dir / "index.json", index)
    return index


def load_detectors(config: PipelineConfig) -> dict[str, tuple[TcnaModel, ScalingParams]]:
    index_path = config.models_dir / "index.json"
    if not index_path.exists():
        raise FileNotFoundError(f"no trained models at {config.models_dir} (run `tcnads train` first)")
    index = json.loads(index_path.read_text())
    return {
        mid: (
            TcnaModel.load(config.models_dir / files["model"]),
            ScalingParams.load(config.models_dir / files["scaler"]),
        )
        for mid, files in index.items()
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(config: PipelineConfig) -> dict:
    if not config.generators:
        raise ValidationError("config has no `generators` list")
    specs = [GeneratorSpec.from_json(d) for d in config.generators]
    specs = [dataclasses.replace(s, seed=s.seed + config.seed) for s in specs]
    test_specs = [
        dataclasses.replace(
            s,
            seed=s.seed + 1,
            start_step=s.start_step + s.length,
            length=config.test_length or s.length,
        )
        for s in specs
    ]
    config.out_dir.mkdir(parents=True, exist_ok=True)
    train_records = generate_log(specs)
    test_records = generate_log(test_specs)
    write_log(train_records, config.train_log_path)
    write_log(test_records, config.test_log_path)
    return {
        "train_log": str(config.train_log_path),
        "test_log": str(config.test_log_path),
        "train_records": len(train_records),
        "test_records": len(test_records),
    }


def cmd_train(config: PipelineConfig) -> dict:
    records = load_log(config.train_log_path)
    trained = train_message_models(records, config.tcna_config, config.train_config())
    save_detectors(config, trained)
    config.reports_dir.mkdir(parents=True, exist_ok=True)
    summary = []
    for message_id, det in trained.items():
        det.report.save_jsonl(config.reports_dir / f"train_{safe_name(message_id)}.jsonl")
        best_train, best_val = det.report.best_losses()
        summary.append(
            {
                "id": message_id,
                "m": det.model.config.m,
                "receptive_field": det.model.config.receptive_field,
                "parameters": det.model.parameter_count(),
                "epochs_run": det.report.stopped_epoch,
                "best_epoch": det.report.best_epoch,
                "train_loss": best_train,
                "val_loss": best_val,
            }
        )
    _write_csv(config.reports_dir / "train_summary.csv", summary)
    if config.figures and any(d.report.train_loss for d in trained.values()):
        from .plots import plot_training_curves

        plot_training_curves({mid: d.report for mid, d in trained.items()}, config.reports_dir / "training_curves.png")
    return {"models": str(config.models_dir), "ids": summary}


def cmd_inject(config: PipelineConfig) -> dict:
    records = load_log(config.test_log_path)
    specs = attacks_mod.load_attack_specs(config.attacks) if config.attacks else []
    series = {mid: SignalSeries.from_records(recs) for mid, recs in group_by_id(records).items()}
    min_length = None
    if config.receptive_field or config.block_layers:
        min_length = config.tcna_config(1).receptive_field + 1
    config.attacked_dir.mkdir(parents=True, exist_ok=True)

    manifest = {"source": str(config.test_log_path), "scenarios": {}}
    scenarios = {}
    for kind in attacks_mod.KINDS:
        chosen = [s for s in specs if s.kind == kind]
        if chosen:
            scenarios[kind] = chosen
    scenarios["all"] = specs
    for name, chosen in scenarios.items():
        attacked, summaries = attacks_mod.apply_attacks(series, chosen, config.post_gap_labels, min_length)
        path = config.attacked_dir / f"{name}.csv"
        write_log(_merge_series(attacked), path)
        manifest["scenarios"][name] = {
            "log": path.name,
            "attacks": [s.to_json() for s in summaries],
            "labeled": int(sum(s.labeled for s in summaries)),
        }
    _write_json(config.attacked_dir / "manifest.json", manifest)
    return manifest


def _merge_series(series_by_id) -> list:
    """Records of all IDs in timestamp order (stable on ID order)."""
    rows = []
    for order, s in enumerate(series_by_id.values()):
        rows += [(r.timestamp, order, i, r) for i, r in enumerate(s.to_records())]
    rows.sort(key=lambda item: item[:3])
    return [r for *_, r in rows]


def cmd_evaluate(config: PipelineConfig) -> dict:
    detectors = load_detectors(config)
    manifest_path = config.attacked_dir / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        logs = {
            name: config.attacked_dir / info["log"]
            for name, info in manifest["scenarios"].items()
            if name != "all"
        }
        if not logs:
            logs = {"clean": config.attacked_dir / manifest["scenarios"]["all"]["log"]}
    else:
        logs = {"clean": config.test_log_path}

    reports_dir = config.reports_dir
    (reports_dir / "trees").mkdir(parents=True, exist_ok=True)
    results = {}
    first_series = None
    for name, path in logs.items():
        records = load_log(path)
        series = {mid: SignalSeries.from_records(recs) for mid, recs in group_by_id(records).items()}
        first_series = first_series or series
        result = evaluate_series(detectors, series, config.calibration_ratio, config.max_depth)
        results[name] = result
        for mid, tree in result.trees.items():
            tree.save(reports_dir / "trees" / f"{name}_{safe_name(mid)}.tree.json")
            result.scores[mid].write_csv(reports_dir / f"ds_{name}_{safe_name(mid)}.csv")

    if len(results) == 1:
        (name, only), = results.items()
        aggregate = MetricsReport.from_predictions(only.labels, only.predictions, only.probabilities)
        aggregate.notes = only.report.notes
    else:
        labels = np.concatenate([r.labels for r in results.values()])
        preds = np.concatenate([r.predictions for r in results.values()])
        probs = np.concatenate([r.probabilities for r in results.values()])
        aggregate = MetricsReport.from_predictions(labels, preds, probs)
    aggregate.breakdown = {name: r.report for name, r in results.items()}
    write_metrics_json(aggregate, reports_dir / "metrics.json")
    write_metrics_csv(aggregate, reports_dir / "metrics.csv")

    curves = {}
    for name, r in results.items():
        points = r.roc()
        if points is not None:
            write_roc_csv(points, reports_dir / f"roc_{name}.csv")
            curves[name] = (points, r.report.roc_auc)
    if config.figures and curves:
        from .plots import plot_roc

        plot_roc(curves, reports_dir / "roc.png")

    overhead = {}
    first = next(iter(results.values()))
    for mid, (model, scaler) in detectors.items():
        if mid not in first.scores:
            continue
        series = apply_scaler(first_series[mid], scaler)
        X, Y = window_arrays(series.values, model.config.receptive_field, mid)
        rep = overhead_report(model, first.trees[mid], X[0], Y[0], samples=config.latency_samples)
        overhead[mid] = rep.to_json()
    _write_json(reports_dir / "overhead.json", overhead)
    return {"metrics": aggregate.to_json(), "overhead": overhead}


def cmd_sweep(config: PipelineConfig, receptive_fields=None) -> dict:
    fields = list(receptive_fields or config.receptive_fields)
    if not fields:
        raise ValidationError("empty receptive field list")
    for R in fields:
        layers_for_receptive_field(R, config.kernel_size)
    records = load_log(config.train_log_path)
    rows = []
    for R in fields:
        trained = train_message_models(records, lambda m: config.tcna_config(m, R), config.train_config())
        losses = [d.report.best_losses() for d in trained.values()]
        rows.append(
            {
                "receptive_field": R,
                "layers": layers_for_receptive_field(R, config.kernel_size),
                "avg_train_loss": float(np.mean([l[0] for l in losses])),
                "avg_val_loss": float(np.mean([l[1] for l in losses])),
                "selected": False,
            }
        )
    best = min(rows, key=lambda r: (r["avg_val_loss"], r["receptive_field"]))
    best["selected"] = True
    config.reports_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(config.reports_dir / "sweep.csv", rows)
    _write_json(config.reports_dir / "sweep.json", rows)
    if config.figures:
        from .plots import plot_sweep

        plot_sweep(rows, config.reports_dir / "sweep.png")
    return {"rows": rows, "selected": best["receptive_field"], "table": sweep_table(rows)}


def sweep_table(rows) -> str:
    """Two-row comparison: receptive fields across, losses down, '*' marks the pick."""
    head = [f"{r['receptive_field']}{'*' if r['selected'] else ''}" for r in rows]
    lines = [
        "\t".join(["receptive_field"] + head),
        "\t".join(["avg_train_loss"] + [f"{r['avg_train_loss']:.3g}" for r in rows]),
        "\t".join(["avg_val_loss"] + [f"{r['avg_val_loss']:.3g}" for r in rows]),
    ]
    return "\n".join(lines)


def _write_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tcnads", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("generate", "write synthetic train/test logs"),
        ("train", "train one model per message ID"),
        ("inject", "inject attacks into the test log"),
        ("evaluate", "score attacked logs and write metrics"),
        ("sweep", "compare receptive field lengths"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (overrides config `out`)")
        if name == "sweep":
            p.add_argument("--receptive-fields", type=int, nargs="+", help="R values, e.g. 16 32 64 128")
    return parser


def run(argv=None) -> dict:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    config = PipelineConfig.load(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out:
        config.out = args.out
    if args.command == "generate":
        return cmd_generate(config)
    if args.command == "train":
        return cmd_train(config)
    if args.command == "inject":
        return cmd_inject(config)
    if args.command == "evaluate":
        return cmd_evaluate(config)
    return cmd_sweep(config, args.receptive_fields)


def main(argv=None) -> int:
    try:
        result = run(argv)
    except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON error
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    if "table" in result:
        print(result["table"])
    else:
        print(json.dumps(result, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
