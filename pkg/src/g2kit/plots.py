"""Matplotlib figure rendering for analysis and comparison outputs.

Figures are built on explicit ``Figure`` objects with the Agg canvas, so
rendering works headless and never touches pyplot's global state.
"""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .estimator import AlphaEstimate
from .histogram import DetectionHistogram, RegionSpec
from .reporting import format_measurement

_REGION_STYLE = {
    "null": ("#d62728", 0.15),
    "peak": ("#2ca02c", 0.25),
    "dark reference": ("#7f7f7f", 0.25),
}


def _new_figure(width: float = 8.0, height: float = 4.5) -> Figure:
    fig = Figure(figsize=(width, height), dpi=120)
    FigureCanvasAgg(fig)
    return fig


def save_histogram_figure(
    path,
    hist: DetectionHistogram,
    regions: RegionSpec | None = None,
    title: str | None = None,
) -> None:
    """Step histogram of one detector with shaded analysis regions."""
    fig = _new_figure()
    ax = fig.add_subplot(111)
    edges = hist.bin_edges_ps
    ax.stairs(hist.counts, edges, color="#1f77b4", fill=True, alpha=0.85)
    if regions is not None:
        spans = {
            "null": regions.null,
            "peak": regions.peak,
            "dark reference": regions.dark_reference,
        }
        for name, (lo, hi) in spans.items():
            if hi > lo:
                color, alpha = _REGION_STYLE[name]
                ax.axvspan(lo, hi, color=color, alpha=alpha, label=name)
        ax.legend(loc="upper right", fontsize=8)
    ax.set_xlabel("delay from trigger (ps)")
    ax.set_ylabel("counts per bin")
    if hist.counts.max(initial=0) > 0:
        ax.set_yscale("symlog", linthresh=1)
    ax.set_title(title or f"detector {hist.detector_id} delay histogram")
    fig.tight_layout()
    fig.savefig(path)


def save_budget_figure(path, estimate: AlphaEstimate, title: str | None = None) -> None:
    """Horizontal bars of each budget row's contribution to u(alpha)."""
    fig = _new_figure(8.0, 0.6 * max(4, len(estimate.budget)) + 1.2)
    ax = fig.add_subplot(111)
    names = [row.quantity for row in estimate.budget]
    contributions = [row.contribution for row in estimate.budget]
    y = np.arange(len(names))
    ax.barh(y, contributions, color="#1f77b4")
    ax.axvline(estimate.u_alpha, color="#d62728", linestyle="--", label="combined u(alpha)")
    ax.set_yticks(y, names)
    ax.invert_yaxis()
    positive = [c for c in contributions if c > 0]
    if positive and max(positive) / max(min(positive), 1e-300) > 1e3:
        ax.set_xscale("log")
    ax.set_xlabel("uncertainty contribution")
    v, u = format_measurement(estimate.alpha, estimate.u_alpha)
    ax.set_title(title or f"{estimate.label or estimate.protocol}: alpha = {v} +/- {u}")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)


def save_comparison_figure(path, estimates, title: str | None = None) -> None:
    """Error-bar chart of alpha +/- u(k=1) across sessions."""
    estimates = list(estimates)
    if not estimates:
        raise ValueError("no estimates to plot")
    fig = _new_figure(max(6.0, 1.6 * len(estimates) + 3), 4.5)
    ax = fig.add_subplot(111)
    x = np.arange(len(estimates))
    alphas = [e.alpha for e in estimates]
    us = [e.u_alpha for e in estimates]
    names = [e.label or f"estimate-{i + 1}" for i, e in enumerate(estimates)]
    ax.errorbar(x, alphas, yerr=us, fmt="o", capsize=4, color="#1f77b4")
    ax.axhline(0.0, color="#7f7f7f", linewidth=0.8)
    ax.set_xticks(x, names, rotation=20, ha="right")
    ax.set_ylabel("alpha (k=1 bars)")
    ax.set_title(title or "multi-photon suppression across sessions")
    ax.margins(x=0.15 if len(estimates) > 1 else 0.4)
    fig.tight_layout()
    fig.savefig(path)
