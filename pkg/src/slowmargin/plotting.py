"""Figures written to self-contained SVG files.

Each helper builds one matplotlib figure, saves it, and returns the path.
Salt and metadata are pinned so reruns produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import BIN_WIDTH, AggregateStats, gap_pdf  # noqa: E402
from .trajectory import TrajectoryLog  # noqa: E402

_RC = {"svg.hashsalt": "slowmargin", "svg.fonttype": "path", "font.size": 9}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return str(path)


def histogram_figure(agg: AggregateStats, path) -> str:
    """Bar chart of the converged trials' statistic with the scaled gap density."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 3.6))
        lefts = np.arange(len(agg.histogram)) * BIN_WIDTH
        ax.bar(lefts, agg.histogram, width=BIN_WIDTH, align="edge", color="#7a9cc6", edgecolor="white", linewidth=0.5)
        xs = np.linspace(0.0, 3.0, 301)
        scale = agg.n_converged * BIN_WIDTH
        ax.plot(xs, [scale * gap_pdf(x) for x in xs], color="#c0392b", linewidth=1.5, label="scaled density")
        ax.set_xlabel("min(|b2 - b1|, |w1(0) + w2(0)| / 2)")
        ax.set_ylabel("trials")
        ax.set_title(f"{agg.n_converged} of {agg.n_trials} trials converged")
        ax.set_xlim(0, 3)
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def trajectory_figure(log: TrajectoryLog, path, floor=None) -> str:
    """Boundary point and margin gap against step on a log axis.

    ``floor`` is an optional ``(t, bound)`` pair of arrays drawn under
    the boundary curve.
    """
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 3.6))
        t = log.times
        sel = t > 0
        ax.semilogx(t[sel], log.x_star[sel], color="#2c3e50", linewidth=1.2, label="boundary point")
        gap = np.clip(1.0 - log.margin[sel], 0.0, None)
        ax.semilogx(t[sel], gap, color="#7a9cc6", linewidth=1.0, linestyle="--", label="margin gap")
        if floor is not None:
            ax.semilogx(floor[0], floor[1], color="#c0392b", linewidth=1.0, label="lower bound")
        ax.set_xlabel("virtual time" if log.dt is not None else "step")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)
