"""Matplotlib figures rendered next to the delimited report files.

Figures are a convenience view of the CSV contracts; the CSVs stay the
authoritative outputs. All functions write PNG files and return the path.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_STYLE = {
    "figure.figsize": (6.0, 3.8),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
}


def _mean_ci(values) -> tuple[float, float]:
    arr = np.asarray(list(values), dtype=np.float64)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, 0.0
    half = 1.96 * float(arr.std(ddof=1)) / math.sqrt(arr.size)
    return mean, half


def efficiency_path_figure(mlca_paths, rs_results, out_path) -> Path:
    """Per-query efficiency-loss curves, averaged over seeds.

    ``mlca_paths`` is a list (one entry per seed) of (queries, loss) rows;
    ``rs_results`` a list of final (queries, loss) pairs.
    """
    out_path = Path(out_path)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        grid = sorted({q for path in mlca_paths for q, _ in path})
        means, lows, highs = [], [], []
        for q in grid:
            at_q = []
            for path in mlca_paths:
                reached = [loss for qq, loss in path if qq <= q]
                if reached:
                    at_q.append(reached[-1])
            mean, half = _mean_ci(at_q)
            means.append(mean)
            lows.append(mean - half)
            highs.append(mean + half)
        ax.plot(grid, means, marker="o", ms=3, label="MLCA (MVNN)")
        ax.fill_between(grid, lows, highs, alpha=0.2)
        if rs_results:
            mean, half = _mean_ci([loss for _, loss in rs_results])
            q_rs = max(q for q, _ in rs_results)
            ax.errorbar([q_rs], [mean], yerr=[half], fmt="s", ms=4,
                        capsize=3, label="random search")
        ax.set_xlabel("value queries per bidder")
        ax.set_ylabel("efficiency loss")
        ax.set_ylim(bottom=0)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_path)
        plt.close(fig)
    return out_path


def runtime_figure(rows, out_path) -> Path:
    """Mean solve time per architecture for both encodings."""
    out_path = Path(out_path)
    archs = sorted({r.architecture for r in rows}, key=lambda a: (len(a), a))
    labels = ["-".join(str(w) for w in a) for a in archs]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        x = np.arange(len(archs))
        width = 0.38
        for offset, encoding, color in ((-width / 2, "mvnn", "tab:blue"),
                                        (width / 2, "relu", "tab:orange")):
            means, halves = [], []
            for arch in archs:
                times = [r.wall_time for r in rows
                         if r.architecture == arch and r.encoding == encoding]
                mean, half = _mean_ci(times) if times else (0.0, 0.0)
                means.append(mean)
                halves.append(half)
            ax.bar(x + offset, means, width, yerr=halves, capsize=3,
                   label=encoding, color=color)
        ax.set_xticks(x)
        ax.set_xticklabels(labels)
        ax.set_xlabel("architecture")
        ax.set_ylabel("mean solve time [s]")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_path)
        plt.close(fig)
    return out_path


def fit_scatter_figure(true_values, predicted_values, out_path,
                       title: str = "") -> Path:
    """Predicted vs true values with the identity line."""
    out_path = Path(out_path)
    true_values = np.asarray(true_values, dtype=np.float64)
    predicted_values = np.asarray(predicted_values, dtype=np.float64)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 4.0))
        lim_hi = float(max(true_values.max(initial=1.0),
                           predicted_values.max(initial=1.0))) * 1.05
        ax.plot([0, lim_hi], [0, lim_hi], color="grey", lw=1)
        ax.scatter(true_values, predicted_values, s=8, alpha=0.6)
        ax.set_xlabel("true value")
        ax.set_ylabel("predicted value")
        if title:
            ax.set_title(title)
        ax.set_xlim(0, lim_hi)
        ax.set_ylim(0, lim_hi)
        fig.tight_layout()
        fig.savefig(out_path)
        plt.close(fig)
    return out_path
