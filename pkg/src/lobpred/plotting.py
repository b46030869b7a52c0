"""Figures written next to the delimited report files.

Agg backend only; PNG metadata is stripped so identical inputs give
identical bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import Aggregate, EvaluationReport  # noqa: E402

_ACCURACIES = (
    ("overall_accuracy", "overall"),
    ("volatility_accuracy", "volatility"),
    ("directional_accuracy", "directional"),
)
_CLASS_COLORS = ("tab:green", "tab:red", "tab:gray")


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def daily_accuracy(reports: Sequence[EvaluationReport], path: str | Path, title: str = "") -> Path:
    """Overall, volatility and directional accuracy per test day."""
    days = [r.day for r in reports]
    x = np.arange(len(days))
    fig, ax = plt.subplots(figsize=(7, 3.6))
    for key, label in _ACCURACIES:
        vals = [getattr(r, key) for r in reports]
        y = np.array([np.nan if v is None else v for v in vals], dtype=float)
        ax.plot(x, y, marker="o", ms=3, lw=1.2, label=label)
    ax.axhline(1 / 3, color="k", lw=0.6, ls=":")
    ax.axhline(0.5, color="k", lw=0.6, ls="--")
    ax.set_xticks(x)
    ax.set_xticklabels(days, rotation=60, ha="right", fontsize=7)
    ax.set_ylim(0, 1)
    ax.set_ylabel("accuracy")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    return _save(fig, path)


def comparison(columns: Mapping[str, Mapping[str, Aggregate]], path: str | Path,
               title: str = "") -> Path:
    """Grouped bars of the three accuracies per input variant, std as error bars."""
    names = list(columns)
    x = np.arange(len(_ACCURACIES))
    w = 0.8 / max(len(names), 1)
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for i, name in enumerate(names):
        aggs = [columns[name][key] for key, _ in _ACCURACIES]
        means = [np.nan if a.mean is None else a.mean for a in aggs]
        stds = [0.0 if a.std is None else a.std for a in aggs]
        ax.bar(x + (i - (len(names) - 1) / 2) * w, means, w, yerr=stds, capsize=3, label=name)
    ax.axhline(0.5, color="k", lw=0.6, ls="--")
    ax.set_xticks(x)
    ax.set_xticklabels([label for _, label in _ACCURACIES])
    ax.set_ylim(0, 1)
    ax.set_ylabel("daily mean accuracy")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def label_path(m: np.ndarray, anchors: np.ndarray, y: np.ndarray, labels: np.ndarray,
               alpha: float, path: str | Path, title: str = "") -> Path:
    """Standardized mid-price with anchor classes on top, target path below."""
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(8, 5), sharex=True,
                                      gridspec_kw={"height_ratios": [2, 1]})
    top.plot(np.arange(len(m)), m, color="k", lw=0.6)
    for c, color in enumerate(_CLASS_COLORS):
        sel = labels == c
        top.scatter(anchors[sel], m[anchors[sel]], s=2, color=color, label=("UP", "DOWN", "STABLE")[c])
    top.set_ylabel("m(t)")
    top.legend(fontsize=7, markerscale=4, loc="upper left")
    bottom.plot(anchors, y, lw=0.6, color="tab:blue")
    bottom.axhspan(-alpha, alpha, color="tab:gray", alpha=0.3)
    bottom.set_ylabel("y")
    bottom.set_xlabel("event index t")
    if title:
        top.set_title(title)
    fig.tight_layout()
    return _save(fig, path)
