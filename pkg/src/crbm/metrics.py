"""Error metrics and pseudo-likelihood monitoring.

RMSE scores the numerical-mean point predictions; MAE scores the MAP levels.
The pseudo-likelihood monitor scores each observed cell under the predictive
distribution computed from the instance's full observation vector (the cell
itself included), which keeps monitoring cheap and comparable across epochs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyEvaluationError
from .inference import factor_posterior_meanfield, level_probabilities, point_predictions

PROB_FLOOR = 1e-12


def rmse(predictions, truths) -> float:
    """Root mean squared error of numeric predictions against true levels."""
    predictions = np.asarray(predictions, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if predictions.size == 0 or predictions.shape != truths.shape:
        raise EmptyEvaluationError("need matching nonempty prediction/truth arrays")
    return float(np.sqrt(np.mean((predictions - truths) ** 2)))


def mae(predictions, truths) -> float:
    """Mean absolute error of MAP level predictions against true levels."""
    predictions = np.asarray(predictions, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if predictions.size == 0 or predictions.shape != truths.shape:
        raise EmptyEvaluationError("need matching nonempty prediction/truth arrays")
    return float(np.mean(np.abs(predictions - truths)))


def pseudo_log_likelihood(params, items, levels, floor=PROB_FLOOR) -> float:
    """Mean log-probability of each observed cell given the full instance."""
    items = np.asarray(items, dtype=int)
    levels = np.asarray(levels, dtype=int)
    if items.size == 0:
        raise EmptyEvaluationError("instance has no observed cells")
    mf = factor_posterior_meanfield(items, levels, params)
    total = 0.0
    for i, lvl in zip(items, levels):
        probs = level_probabilities(params, mf.factor_probs, int(i))
        total += float(np.log(max(float(probs[int(lvl) - 1]), floor)))
    return total / items.size


def dataset_pseudo_log_likelihood(params, instances, floor=PROB_FLOOR) -> float:
    """Cell-weighted mean pseudo-log-likelihood over a list of instances."""
    total = 0.0
    cells = 0
    for items, levels in instances:
        if items.size == 0:
            continue
        total += pseudo_log_likelihood(params, items, levels, floor=floor) * items.size
        cells += int(items.size)
    if cells == 0:
        raise EmptyEvaluationError("no observed cells")
    return total / cells


@dataclass
class HeldoutReport:
    pll: float
    rmse: float
    mae: float
    n_cells: int


def heldout_metrics(params, context, targets, floor=PROB_FLOOR) -> HeldoutReport:
    """Score held-out cells from posteriors inferred on each instance's context.

    ``context`` and ``targets`` are aligned per-instance (items, levels)
    lists; instances with no target cells are skipped.
    """
    total_log = 0.0
    sq = 0.0
    ab = 0.0
    n = 0
    for (ctx_items, ctx_levels), (tgt_items, tgt_levels) in zip(context, targets):
        if tgt_items.size == 0:
            continue
        mf = factor_posterior_meanfield(ctx_items, ctx_levels, params)
        for i, lvl in zip(tgt_items, tgt_levels):
            probs = level_probabilities(params, mf.factor_probs, int(i))
            total_log += float(np.log(max(float(probs[int(lvl) - 1]), floor)))
            mean, map_level = point_predictions(probs)
            sq += (mean - lvl) ** 2
            ab += abs(map_level - lvl)
            n += 1
    if n == 0:
        return HeldoutReport(float("nan"), float("nan"), float("nan"), 0)
    return HeldoutReport(total_log / n, float(np.sqrt(sq / n)), ab / n, n)


def write_metrics_report(path, rows) -> None:
    """Delimited report: one (metric, value, n_cells) row per line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("metric\tvalue\tn_cells\n")
        for metric, value, n_cells in rows:
            fh.write(f"{metric}\t{value:.6f}\t{n_cells}\n")
