"""Render plots from result CSVs, written alongside the delimited output.

Sweep CSVs become metric-vs-value line plots; heterogeneous rows (ablation
or expert comparisons) become grouped bars.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

METRICS = ("precision", "recall", "f1", "fp_rate", "fn_rate")
_SWEEP_AXES = ("alpha", "beta", "gamma")


def _read_rows(csv_path: str | Path) -> list[dict[str, str]]:
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"no data rows in {csv_path}")
    return rows


def _detect_axis(rows: list[dict[str, str]]) -> str | None:
    for axis in _SWEEP_AXES:
        if len({row[axis] for row in rows}) > 1:
            return axis
    return None


def render_csv(csv_path: str | Path, out_dir: str | Path | None = None) -> Path:
    """Render the CSV into a PNG next to it (or into ``out_dir``)."""
    csv_path = Path(csv_path)
    rows = _read_rows(csv_path)
    target_dir = Path(out_dir) if out_dir is not None else csv_path.parent
    target_dir.mkdir(parents=True, exist_ok=True)
    out_path = target_dir / (csv_path.stem + ".png")

    axis = _detect_axis(rows) if len(rows) > 1 else None
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    if axis is not None:
        _plot_sweep(ax, rows, axis)
    else:
        _plot_bars(ax, rows)
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def _plot_sweep(ax, rows, axis):
    labels = [row[axis] for row in rows]
    x = np.arange(len(labels))
    for metric in ("precision", "recall", "f1"):
        ax.plot(x, [float(row[metric]) for row in rows], marker="o", label=metric)
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_xlabel(axis)
    ax.set_ylabel("score")
    ax.set_title(f"{axis} sweep")
    ax.legend()


def _plot_bars(ax, rows):
    groups = [f"{row['ablation']}/{row['expert']}" for row in rows]
    x = np.arange(len(groups))
    width = 0.8 / len(METRICS)
    for k, metric in enumerate(METRICS):
        ax.bar(x + k * width, [float(row[metric]) for row in rows],
               width=width, label=metric)
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels(groups, rotation=20, ha="right")
    ax.set_ylabel("score")
    ax.set_title("run comparison")
    ax.legend(fontsize=8)
