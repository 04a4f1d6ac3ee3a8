"""Figure rendering for the report-producing commands.

Each figure is written next to its CSV counterpart; the CSVs remain the
deterministic contract, figures are a convenience view of the same data.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["save_margin_figure", "save_rate_figure", "save_rademacher_figure"]

_DPI = 150


def save_margin_figure(margin_cdf, path: str | Path) -> None:
    """Empirical margin CDF P(p_(1) - p_(2) <= h) on log-x axes."""
    h = np.array([p[0] for p in margin_cdf])
    cdf = np.array([p[1] for p in margin_cdf])
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.semilogx(h, cdf, marker="o", ms=3, lw=1.2)
    ax.set_xlabel("margin h")
    ax.set_ylabel(r"P(p$_{(1)}$ - p$_{(2)}$ $\leq$ h)")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_rate_figure(aggregates, slopes: dict[str, float], path: str | Path) -> None:
    """Log-log mean excess risk vs n, one line per penalty, slopes in the
    legend. ``aggregates`` is a list of AggregateRow."""
    fig, ax = plt.subplots(figsize=(5.4, 4.0))
    penalties = sorted({a.penalty for a in aggregates})
    for pen in penalties:
        rows = sorted((a for a in aggregates if a.penalty == pen), key=lambda a: a.n)
        ns = np.array([a.n for a in rows], dtype=float)
        means = np.array([a.mean_excess_risk for a in rows])
        errs = np.array([a.stderr_excess_risk for a in rows])
        slope = slopes.get(pen, float("nan"))
        label = pen if math.isnan(slope) else f"{pen} (slope {slope:.2f})"
        ax.errorbar(ns, means, yerr=errs, marker="o", ms=4, lw=1.2, capsize=2, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("mean excess risk")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_rademacher_figure(draws: np.ndarray, bound: float, path: str | Path) -> None:
    """Histogram of per-draw complexity values with the (7/720) sqrt(n)
    reference line."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.hist(draws, bins=min(40, max(10, draws.size // 10)), alpha=0.8)
    ax.axvline(bound, color="crimson", lw=1.2, ls="--", label=r"(7/720)$\sqrt{n}$")
    ax.set_xlabel("per-draw complexity")
    ax.set_ylabel("count")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
