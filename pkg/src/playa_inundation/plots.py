"""Static SVG figures: ROC curves, per-playa timelines, regional wet fraction."""

from pathlib import Path
from typing import Dict, Sequence

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "playa-inundation", "svg.fonttype": "none", "figure.dpi": 100}


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def _decimal_years(months: np.ndarray) -> np.ndarray:
    return months[:, 0] + (months[:, 1] - 1) / 12.0


def plot_roc(curves: Dict[str, tuple], path: Path) -> None:
    """``curves`` maps a split name to ``(fpr, tpr, auc)``."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 5))
        for name, (fpr, tpr, area) in curves.items():
            ax.plot(fpr, tpr, label=f"{name} (AUC {area:.3f})")
        ax.plot([0, 1], [0, 1], color="grey", linestyle=":", linewidth=1)
        ax.set_xlabel("False positive rate")
        ax.set_ylabel("True positive rate")
        ax.legend(loc="lower right")
        _save(fig, path)


def plot_timelines(panels: Sequence[tuple], months: np.ndarray, path: Path) -> None:
    """``panels`` is a list of ``(title, labels, probs)`` for individual playas."""
    x = _decimal_years(months)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(len(panels), 1, figsize=(9, 2.4 * len(panels)), sharex=True, squeeze=False)
        for ax, (title, labels, probs) in zip(axes[:, 0], panels):
            ax.step(x, labels, where="post", color="black", linewidth=0.8, label="observed")
            ax.plot(x, probs, color="tab:blue", linewidth=0.9, label="predicted probability")
            ax.set_ylim(-0.05, 1.05)
            ax.set_title(title, fontsize=9)
        axes[0, 0].legend(loc="upper left", fontsize=8)
        axes[-1, 0].set_xlabel("Year")
        _save(fig, path)


def plot_fraction(months: np.ndarray, truth: np.ndarray, predicted: np.ndarray, path: Path, boundaries=()) -> None:
    x = _decimal_years(months)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(9, 3.5))
        ax.plot(x, truth, color="black", linewidth=0.9, label="observed")
        ax.plot(x, predicted, color="tab:orange", linewidth=0.9, label="predicted")
        for b in boundaries:
            ax.axvline(b, color="grey", linestyle="--", linewidth=0.8)
        ax.set_xlabel("Year")
        ax.set_ylabel("Fraction of playas inundated")
        ax.legend(loc="upper right")
        _save(fig, path)
