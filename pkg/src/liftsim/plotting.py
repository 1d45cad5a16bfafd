"""Figures for the ``report`` subcommand."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "lines.markersize": 3,
    "svg.hashsalt": "liftsim",
}

PANELS = (
    ("people_moved", "people moved"),
    ("mean_total_time_s", "mean total time [s]"),
    ("median_total_time_s", "median total time [s]"),
    ("max_total_time_s", "max total time [s]"),
    ("sum_total_time_s", "sum total time [s]"),
    ("loss_mean", "mean TD loss"),
)


def epoch_figure(rows: list, path, label: str = "", fmt: str = "png") -> None:
    """Grid of per-epoch metric curves written to ``path`` (a filename or binary file)."""
    epochs = [r["epoch"] for r in rows]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 3, figsize=(9.0, 5.0), sharex=True)
        for ax, (key, title) in zip(axes.ravel(), PANELS):
            ax.plot(epochs, [r[key] for r in rows], marker="o", color="0.2")
            ax.set_title(title)
            ax.grid(alpha=0.3, linewidth=0.5)
        for ax in axes[-1]:
            ax.set_xlabel("epoch")
        if label:
            fig.suptitle(label, fontsize=9)
        fig.tight_layout()
        # no timestamps or version strings: the file must be reproducible
        fig.savefig(path, format=fmt, dpi=120, metadata={"Software": None})
        plt.close(fig)


def total_time_histogram(totals: list, path, label: str = "", fmt: str = "png") -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.hist(totals, bins=40, color="0.4")
        ax.set_xlabel("total time per passenger [s]")
        ax.set_ylabel("passengers")
        if label:
            ax.set_title(label, fontsize=9)
        fig.tight_layout()
        fig.savefig(path, format=fmt, dpi=120, metadata={"Software": None})
        plt.close(fig)
