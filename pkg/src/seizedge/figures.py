"""Matplotlib figure rendering for CLI reports.

All functions write a file and return its path; the Agg backend keeps them
usable in headless runs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .labels import Phase
from .wmv import EventKind


def plot_stream_scores(times, score_ictal, score_preictal, events, annotations, path, theta_i=None, theta_p=None):
    """Score traces over time with detected events and annotated seizures."""
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(10, 5))
    times = np.asarray(times)
    ax1.plot(times, score_ictal, lw=0.8, color="tab:red", label="ictal score")
    ax2.plot(times, score_preictal, lw=0.8, color="tab:orange", label="preictal score")
    if theta_i is not None:
        ax1.axhline(theta_i, color="gray", ls="--", lw=0.8)
    if theta_p is not None:
        ax2.axhline(theta_p, color="gray", ls="--", lw=0.8)
    for start, end in annotations:
        for ax in (ax1, ax2):
            ax.axvspan(start, end, color="tab:blue", alpha=0.15)
    for ev in events:
        ax = ax1 if ev.kind == EventKind.ICTAL_DETECTED else ax2
        ax.axvline(ev.time_s, color="k", lw=0.8, alpha=0.6)
    ax1.set_ylabel("ictal score")
    ax2.set_ylabel("preictal score")
    ax2.set_xlabel("time (s)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_cost_report(report, path):
    """Per-layer MAC counts as a horizontal bar chart."""
    fig, ax = plt.subplots(figsize=(7, 0.5 * len(report.layers) + 1.5))
    names = [c.name for c in report.layers]
    macs = [c.macs for c in report.layers]
    ax.barh(names, macs, color="tab:blue")
    ax.set_xlabel("MAC operations")
    ax.invert_yaxis()
    for y, m in enumerate(macs):
        ax.annotate(f"{m:,}", (m, y), va="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_degradation(report, path):
    """Float vs quantized accuracy bars."""
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.bar(["float32", "quantized"], [report.accuracy_float, report.accuracy_quant],
           color=["tab:blue", "tab:red"])
    ax.set_ylim(0, 1)
    ax.set_ylabel("segment accuracy")
    ax.set_title(f"delta = {report.delta * 100:.2f} pts")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
