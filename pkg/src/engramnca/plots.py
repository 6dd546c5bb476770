"""Sweep figures, regenerated purely from the emitted CSV files.

Reading back the CSVs (rather than in-memory histories) keeps the figures
reproducible after the fact, and `PNG_METADATA` pins the PNG text chunk so a
regeneration is byte-identical on the same installation.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .training import loss_bands

PNG_METADATA = {"Software": "engramnca"}


def _read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _sweep_series(rows: list[dict]) -> dict[str, dict[int, list[float]]]:
    series: dict[str, dict[int, list[float]]] = defaultdict(dict)
    for row in rows:
        variant, level = row["variant"], int(row["level"])
        series[variant].setdefault(level, []).append(float(row["loss"]))
    return series


def plot_sweep_curves(metrics_csv, out_dir, window: int = 10) -> Path:
    series = _sweep_series(_read_rows(metrics_csv))
    variants = sorted(series)
    fig, axes = plt.subplots(1, len(variants), figsize=(5 * len(variants), 4),
                             squeeze=False, sharey=True)
    for ax, variant in zip(axes[0], variants):
        for level in sorted(series[variant]):
            losses = series[variant][level]
            lo, hi = loss_bands(losses, window)
            xs = np.arange(len(losses))
            line, = ax.plot(xs, losses, label=f"p={level}", linewidth=1.0)
            ax.fill_between(xs, lo, hi, alpha=0.2, color=line.get_color())
        ax.set_title(variant)
        ax.set_xlabel("iteration")
        ax.set_yscale("log")
        ax.legend()
    axes[0][0].set_ylabel("loss")
    fig.tight_layout()
    out = Path(out_dir) / "sweep_curves.png"
    fig.savefig(out, dpi=110, metadata=PNG_METADATA)
    plt.close(fig)
    return out


def plot_sweep_summary(summary_csv, out_dir) -> Path:
    rows = _read_rows(summary_csv)
    by_variant: dict[str, list[tuple[int, float, float]]] = defaultdict(list)
    for row in rows:
        by_variant[row["variant"]].append(
            (int(row["level"]), float(row["mean_final_loss"]),
             float(row["mean_regrowth_loss"])))

    fig, (ax_final, ax_regrow) = plt.subplots(1, 2, figsize=(10, 4))
    for variant in sorted(by_variant):
        entries = sorted(by_variant[variant])
        levels = [e[0] for e in entries]
        ax_final.plot(levels, [e[1] for e in entries], marker="o", label=variant)
        ax_regrow.plot(levels, [e[2] for e in entries], marker="o", label=variant)
    ax_final.set_xlabel("privatized channels")
    ax_final.set_ylabel("mean final loss")
    ax_final.set_yscale("log")
    ax_regrow.set_xlabel("privatized channels")
    ax_regrow.set_ylabel("mean regrowth loss")
    ax_regrow.set_yscale("log")
    ax_final.legend()
    fig.tight_layout()
    out = Path(out_dir) / "sweep_summary.png"
    fig.savefig(out, dpi=110, metadata=PNG_METADATA)
    plt.close(fig)
    return out
