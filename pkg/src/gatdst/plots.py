"""Figure rendering for the CLI report path.

Each figure sits next to the CSV that carries the same data; the metric
functions themselves never plot.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import ProgressBucket, WindowedPoint

_DPI = 150


def plot_per_slot_accuracy(
    slot_keys,
    accuracies: list[float],
    path: str | Path,
    baseline: list[float] | None = None,
) -> None:
    """Bar chart in serialization order; deltas against a baseline if given."""
    fig, ax = plt.subplots(figsize=(max(6.0, 0.6 * len(slot_keys)), 4.0))
    x = range(len(slot_keys))
    if baseline is None:
        ax.bar(x, accuracies, color="#1f77b4")
        ax.set_ylabel("slot accuracy")
        ax.set_ylim(0.0, 1.05)
    else:
        deltas = [a - b for a, b in zip(accuracies, baseline)]
        colors = ["#2ca02c" if d >= 0 else "#d62728" for d in deltas]
        ax.bar(x, deltas, color=colors)
        ax.axhline(0.0, color="black", linewidth=0.8)
        ax.set_ylabel("slot accuracy delta vs baseline")
    ax.set_xticks(list(x))
    ax.set_xticklabels(slot_keys, rotation=45, ha="right", fontsize=8)
    ax.set_xlabel("domain-slot (serialization order)")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_progress_curve(curve: list[ProgressBucket], path: str | Path) -> None:
    """Joint accuracy against dialogue progress."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    mids = [(b.low + b.high) / 2 for b in curve if b.accuracy is not None]
    values = [b.accuracy for b in curve if b.accuracy is not None]
    ax.plot(mids, values, marker="o", color="#1f77b4")
    ax.set_xlabel("dialogue progress")
    ax.set_ylabel("joint accuracy")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_windowed_delta(
    curves: dict[str, list[WindowedPoint]], path: str | Path, window: float
) -> None:
    """Smoothed pair-accuracy delta against the dependency score."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, curve in curves.items():
        ax.plot(
            [p.jaccard for p in curve],
            [p.mean_delta for p in curve],
            marker=".",
            label=name,
        )
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("value-pair dependency score")
    ax.set_ylabel(f"pair-accuracy delta vs baseline (window {window})")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_training_log(log, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot([e.epoch for e in log], [e.train_loss for e in log], marker="o", label="train")
    ax.plot([e.epoch for e in log], [e.val_loss for e in log], marker="s", label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
