"""Figure rendering for the report path (file output only, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .stats import LearningCurve


def plot_learning_curves(curves: list[LearningCurve], path: str) -> None:
    """Mean return vs step for each run, with a +-1 std band."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for curve in curves:
        label = str(curve.meta.get("variant", "run"))
        steps = np.asarray(curve.steps)
        means = np.asarray(curve.mean_returns)
        stds = np.asarray(curve.std_returns())
        (line,) = ax.plot(steps, means, label=label, linewidth=1.6)
        ax.fill_between(steps, means - stds, means + stds, alpha=0.15, color=line.get_color())
    ax.set_xlabel("environment steps")
    ax.set_ylabel("mean evaluation return")
    ax.legend(loc="best", fontsize=9)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_max_scores(rows: list[dict], path: str) -> None:
    """Bar chart of per-variant maximal average scores."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    names = [r["variant"] for r in rows]
    scores = [r["max_score"] for r in rows]
    ax.bar(range(len(rows)), scores, color="#4878a8")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(names, rotation=20, ha="right", fontsize=9)
    ax.set_ylabel("max average score")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
