"""Figure rendering for the reporting paths.

Figures are written next to the delimited outputs they illustrate: learning
curves beside the training log, an error profile beside the metrics report.
Matplotlib runs headless (Agg) so these work in batch jobs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_learning_curves(records, path) -> None:
    """Two panels: pseudo-likelihood per epoch, validation errors per epoch."""
    epochs = [r.epoch for r in records]
    fig, (ax_ll, ax_err) = plt.subplots(1, 2, figsize=(9, 3.5))

    ax_ll.plot(epochs, [r.train_pll for r in records], marker="o", label="train")
    if any(np.isfinite(r.valid_pll) for r in records):
        ax_ll.plot(epochs, [r.valid_pll for r in records], marker="s", label="validation")
    ax_ll.set_xlabel("epoch")
    ax_ll.set_ylabel("pseudo-log-likelihood / cell")
    ax_ll.legend(loc="lower right", fontsize=8)
    ax_ll.grid(alpha=0.3)

    if any(np.isfinite(r.valid_rmse) for r in records):
        ax_err.plot(epochs, [r.valid_rmse for r in records], marker="o", label="RMSE")
        ax_err.plot(epochs, [r.valid_mae for r in records], marker="s", label="MAE")
        ax_err.legend(loc="upper right", fontsize=8)
    ax_err.set_xlabel("epoch")
    ax_err.set_ylabel("validation error")
    ax_err.grid(alpha=0.3)

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_error_profile(mean_errors, map_errors, path, rmse_value=None, mae_value=None) -> None:
    """Histogram of signed mean-prediction errors plus MAP error counts."""
    mean_errors = np.asarray(mean_errors, dtype=float)
    map_errors = np.asarray(map_errors, dtype=float)
    fig, (ax_mean, ax_map) = plt.subplots(1, 2, figsize=(9, 3.5))

    ax_mean.hist(mean_errors, bins=30, color="steelblue", alpha=0.85)
    title = "mean-prediction error"
    if rmse_value is not None:
        title += f" (RMSE {rmse_value:.3f})"
    ax_mean.set_title(title, fontsize=10)
    ax_mean.set_xlabel("prediction - truth")
    ax_mean.grid(alpha=0.3)

    offsets, counts = np.unique(map_errors, return_counts=True)
    ax_map.bar(offsets, counts, width=0.8, color="darkorange", alpha=0.85)
    title = "MAP level error"
    if mae_value is not None:
        title += f" (MAE {mae_value:.3f})"
    ax_map.set_title(title, fontsize=10)
    ax_map.set_xlabel("|MAP - truth|")
    ax_map.grid(alpha=0.3)

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
