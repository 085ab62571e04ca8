"""Sampling synthetic observation sets from a model.

The generative story runs factors -> utilities -> levels.  Factor marginals
under the joint are not independent Bernoullis once weights are nonzero, so
instances are drawn by burning in an unconstrained Gibbs chain and reading the
final utilities through the thresholds.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .data import ObservationSet
from .matrix import MatrixCrbmParameters, cell_thresholds
from .model import VectorCrbmParameters, threshold_table


def _levels_from_utilities(utilities, thresholds_padded):
    """Bucket utilities into 1-based levels via a padded threshold row-matrix."""
    # thresholds_padded[j] = [-inf, th..., +inf]; level = index of first upper > u
    levels = np.empty(utilities.size, dtype=int)
    for j, u in enumerate(utilities):
        levels[j] = int(np.searchsorted(thresholds_padded[j], u, side="left"))
    return levels


def sample_vector_dataset(
    params: VectorCrbmParameters,
    n_instances: int,
    rng: np.random.Generator,
    density: float = 1.0,
    burn_in: int = 50,
) -> ObservationSet:
    """Draw i.i.d. instances from the model, then thin cells to the density."""
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    n = params.n_visible
    var = params.utility_std**2
    table = threshold_table(params)

    all_inst, all_items, all_levels = [], [], []
    for d in range(n_instances):
        h = (rng.random(params.n_factors) < 0.5).astype(float)
        u = np.zeros(n)
        for _ in range(burn_in + 1):
            mu = var * (params.visible_bias + params.weights @ h)
            u = rng.normal(mu, params.utility_std)
            p = expit(params.factor_bias + u @ params.weights)
            h = (rng.random(params.n_factors) < p).astype(float)
        levels = _levels_from_utilities(u, table)
        keep = np.arange(n) if density >= 1 else np.flatnonzero(rng.random(n) < density)
        all_inst.extend([d] * keep.size)
        all_items.extend(keep.tolist())
        all_levels.extend(levels[keep].tolist())

    return ObservationSet(
        instances=np.array(all_inst, dtype=int),
        items=np.array(all_items, dtype=int),
        levels=np.array(all_levels, dtype=int),
        n_instances=n_instances,
        n_items=n,
        item_levels=np.array([s.levels for s in params.scales], dtype=int),
    )


def sample_matrix_dataset(
    params: MatrixCrbmParameters,
    rng: np.random.Generator,
    density: float = 0.3,
    burn_in: int = 50,
) -> ObservationSet:
    """Draw one incomplete matrix: mask first, then Gibbs over the masked model."""
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    d_count, n_count = params.n_instances, params.n_items
    mask = rng.random((d_count, n_count)) < density
    rows, cols = np.nonzero(mask)
    var = params.utility_std**2

    h = (rng.random((d_count, params.n_instance_factors)) < 0.5).astype(float)
    g = (rng.random((n_count, params.n_item_factors)) < 0.5).astype(float)
    u = np.zeros(rows.size)
    for _ in range(burn_in + 1):
        mu = var * (
            params.item_bias[cols]
            + params.instance_bias[rows]
            + np.sum(params.item_weights[cols] * h[rows], axis=1)
            + np.sum(params.instance_weights[rows] * g[cols], axis=1)
        )
        u = rng.normal(mu, params.utility_std)
        # factor updates sum utility evidence over each row's / column's cells
        h_field = np.zeros((d_count, params.n_instance_factors))
        np.add.at(h_field, rows, u[:, None] * params.item_weights[cols])
        p_h = expit(params.instance_factor_bias + h_field)
        h = (rng.random(p_h.shape) < p_h).astype(float)
        g_field = np.zeros((n_count, params.n_item_factors))
        np.add.at(g_field, cols, u[:, None] * params.instance_weights[rows])
        p_g = expit(params.item_factor_bias + g_field)
        g = (rng.random(p_g.shape) < p_g).astype(float)

    levels = np.empty(rows.size, dtype=int)
    for pos in range(rows.size):
        th = cell_thresholds(params, int(rows[pos]), int(cols[pos]))
        levels[pos] = 1 + int(np.searchsorted(th, u[pos], side="left"))

    return ObservationSet(
        instances=rows,
        items=cols,
        levels=levels,
        n_instances=d_count,
        n_items=n_count,
        item_levels=np.full(n_count, params.levels),
    )
