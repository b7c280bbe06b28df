"""Matplotlib renderers for the report paths.

Every CLI report writes its figure next to the delimited output; all
renderers use the Agg backend so they work headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_trace(records, path) -> None:
    """Per-pair feedback offsets with flagged frames marked."""
    frames = [r.frame for r in records]
    dx = [r.dx for r in records]
    dy = [r.dy for r in records]
    flagged = [r.frame for r in records if r.flagged]

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(frames, dx, "o-", label="dx", color="tab:blue")
    ax.plot(frames, dy, "s-", label="dy", color="tab:orange")
    for f in flagged:
        ax.axvline(f, color="red", alpha=0.3, linewidth=1)
    ax.set_xlabel("frame")
    ax.set_ylabel("offset (px)")
    ax.set_title("feedback translation trace")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_center_report(report, path) -> None:
    """Detected-center error and RMSE (left axis) vs ratio (right axis)."""
    pairs = np.arange(len(report.errors))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(pairs, report.errors, "o-", color="tab:blue", label="center error (px)")
    ax.plot(pairs, report.rmses, "^-", color="tab:green", label="rmse (px)")
    ax.set_xlabel("pair")
    ax.set_ylabel("pixels")
    ax.grid(alpha=0.3)
    ax2 = ax.twinx()
    ax2.plot(pairs, report.ratios, "s-", color="tab:red", label="detected ratio")
    ax2.set_ylabel("ratio", color="tab:red")
    ax2.set_ylim(0, 1.05)
    h1, l1 = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(h1 + h2, l1 + l2, loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_timing(report, path) -> None:
    """Median runtime per matcher variant."""
    names = list(report.seconds)
    secs = [report.seconds[n] for n in names]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.barh(names, secs, color="tab:blue")
    ax.set_xlabel("median seconds / pair")
    ax.set_title(f"matcher timing ({report.n_prev}x{report.n_curr}, dim {report.dim})")
    ax.grid(alpha=0.3, axis="x")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_ghosting(values, path) -> None:
    """Per-pair overlap disagreement of the stitched chain."""
    pairs = np.arange(len(values))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(pairs, values, color="tab:purple")
    ax.set_xlabel("pair")
    ax.set_ylabel("mean |disagreement| (intensity)")
    ax.set_title("panorama overlap ghosting")
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
