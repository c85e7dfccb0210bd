"""Figures for run reports.

All figures are written to files with the Agg backend; nothing is shown
interactively.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .diagnostics import DiagnosticsRecord  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "savefig.dpi": 150,
}


def _col(series, name):
    return np.array([getattr(r, name) for r in series], dtype=float)


def plot_run(
    series: Sequence[DiagnosticsRecord],
    path: str | Path,
    *,
    title: str = "",
    predicted_rate: float | None = None,
) -> Path:
    """Four-panel summary: mass drift, energy and dissipation, H1 distance, signal range."""
    path = Path(path)
    t = _col(series, "t")
    with plt.rc_context(RC):
        fig, axes = plt.subplots(2, 2, figsize=(7.0, 5.0), constrained_layout=True)
        ax = axes[0, 0]
        m = _col(series, "mass")
        ax.plot(t, np.maximum(np.abs(m - m[0]) / abs(m[0]), 1e-17), color="k")
        ax.set_yscale("log")
        ax.set_ylim(bottom=1e-17)
        ax.set_xlabel("t")
        ax.set_ylabel("relative mass drift")

        ax = axes[0, 1]
        ax.plot(t, _col(series, "lyapunov_E"), color="C0", label="E")
        ax.set_xlabel("t")
        ax.set_ylabel("E")
        ax2 = ax.twinx()
        ax2.plot(t, _col(series, "dissipation_D1") + _col(series, "dissipation_D2"),
                 color="C1", ls="--", label="D1 + D2")
        ax2.set_ylabel("D1 + D2")
        ax.legend(handles=ax.lines + ax2.lines, loc="upper right")

        ax = axes[1, 0]
        d = _col(series, "dist_v_h1")
        pos = d > 0
        ax.semilogy(t[pos], d[pos], color="C2", label="H1 distance of v")
        if predicted_rate and pos.any():
            t0, d0 = t[pos][0], d[pos][0]
            ax.semilogy(t[pos], d0 * np.exp(-predicted_rate * (t[pos] - t0)),
                        color="0.5", ls=":", label=f"bound rate {predicted_rate:.3g}")
        du = _col(series, "dist_u")
        ax.semilogy(t[du > 0], du[du > 0], color="C3", lw=0.8, label="sup |u - mean|")
        ax.set_xlabel("t")
        ax.legend(loc="lower left")

        ax = axes[1, 1]
        ax.plot(t, _col(series, "max_v"), color="C4", label="max v")
        ax.plot(t, _col(series, "min_v"), color="C5", label="min v")
        ax.set_xlabel("t")
        ax.legend(loc="best")

        if title:
            fig.suptitle(title)
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_sweep(rows: Sequence[dict], key: str, value: str, path: str | Path) -> Path:
    """Scatter one aggregate column against a swept parameter."""
    path = Path(path)
    x = [r[key] for r in rows]
    y = [r[value] if r[value] is not None else math.nan for r in rows]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.0, 3.0), constrained_layout=True)
        ax.plot(x, y, "o-", color="k")
        ax.set_xlabel(key)
        ax.set_ylabel(value)
        fig.savefig(path)
        plt.close(fig)
    return path
