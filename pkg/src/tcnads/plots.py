"""Report figures. Rendered off-screen to PNG next to the CSV/JSON outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_training_curves(reports, path) -> None:
    """Per-epoch train/validation loss, one colour per message ID."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for i, (message_id, report) in enumerate(reports.items()):
            epochs = range(1, len(report.train_loss) + 1)
            color = f"C{i % 10}"
            ax.plot(epochs, report.train_loss, color=color, label=f"{message_id} train")
            ax.plot(epochs, report.val_loss, color=color, linestyle="--", label=f"{message_id} val")
            if report.best_epoch:
                ax.axvline(report.best_epoch, color=color, linewidth=0.6, alpha=0.5)
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("MSE (scaled units)")
        ax.legend(loc="upper right", ncol=2)
        _save(fig, path)


def plot_roc(curves, path) -> None:
    """``curves`` maps scenario name -> (list of RocPoint, auc)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.plot([0, 1], [0, 1], color="0.7", linewidth=0.8)
        for name, (points, auc) in curves.items():
            ax.plot([p.fpr for p in points], [p.tpr for p in points], marker=".", label=f"{name} (AUC {auc:.3f})")
        ax.set_xlim(-0.01, 1.01)
        ax.set_ylim(-0.01, 1.01)
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.legend(loc="lower right")
        _save(fig, path)


def plot_sweep(rows, path) -> None:
    """Average train/validation loss against receptive field; selected row marked."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        fields = [r["receptive_field"] for r in rows]
        ax.plot(fields, [r["avg_train_loss"] for r in rows], marker="o", label="average training loss")
        ax.plot(fields, [r["avg_val_loss"] for r in rows], marker="s", label="average validation loss")
        for r in rows:
            if r["selected"]:
                ax.axvline(r["receptive_field"], color="0.5", linestyle=":", linewidth=1)
        ax.set_xscale("log", base=2)
        ax.set_xticks(fields, [str(f) for f in fields])
        ax.set_yscale("log")
        ax.set_xlabel("receptive field R")
        ax.set_ylabel("MSE (scaled units)")
        ax.legend()
        _save(fig, path)
