"""Matrix-variate model: per-instance and per-item factors jointly generate cells.

Every observed cell (d, i) couples instance factors h_d with item factors g_i
through its utility mean, and its thresholds combine item log-gaps with
per-instance offsets.  Training alternates a column-wise pass (instances,
holding item posteriors fixed) with a row-wise pass (items, holding instance
posteriors fixed); each pass reduces to the vector model through a view, so
the vector-phase machinery applies unchanged.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import TrainingDivergedError
from .inference import GibbsState, gibbs_sweep
from .learning import EpochRecord, TrainConfig, threshold_gradient
from .model import (
    OrdinalScale,
    VectorCrbmParameters,
    factor_activations,
    threshold_table,
    utility_means,
)
from .truncnorm import _mass_std, truncated_mean_masked


@dataclass
class MatrixCrbmParameters:
    """Item-side and instance-side biases, weights, and threshold parameters."""

    item_bias: np.ndarray            # alpha, (N,)
    instance_bias: np.ndarray        # beta, (D,)
    instance_factor_bias: np.ndarray  # gamma, (K,)
    item_factor_bias: np.ndarray     # xi, (S,)
    item_weights: np.ndarray         # w, (N, K)
    instance_weights: np.ndarray     # omega, (D, S)
    utility_std: float
    item_base: np.ndarray            # fixed first thresholds, (N,)
    item_log_gaps: np.ndarray        # (N, L-2)
    instance_offsets: np.ndarray     # kappa, (D, L-1); column 0 shifts the base
    levels: int

    def __post_init__(self):
        n, k = self.item_weights.shape
        d, s = self.instance_weights.shape
        if self.item_bias.shape != (n,) or self.instance_bias.shape != (d,):
            raise ValueError("bias shapes inconsistent with weights")
        if self.instance_factor_bias.shape != (k,) or self.item_factor_bias.shape != (s,):
            raise ValueError("factor bias shapes inconsistent with weights")
        if self.item_base.shape != (n,) or self.item_log_gaps.shape != (n, self.levels - 2):
            raise ValueError("item threshold shapes inconsistent")
        if self.instance_offsets.shape != (d, self.levels - 1):
            raise ValueError("instance offset shape inconsistent")
        if not self.utility_std > 0:
            raise ValueError("utility_std must be positive")

    @property
    def n_items(self) -> int:
        return self.item_weights.shape[0]

    @property
    def n_instances(self) -> int:
        return self.instance_weights.shape[0]

    @property
    def n_instance_factors(self) -> int:
        return self.item_weights.shape[1]

    @property
    def n_item_factors(self) -> int:
        return self.instance_weights.shape[1]

    def copy(self) -> "MatrixCrbmParameters":
        return MatrixCrbmParameters(
            self.item_bias.copy(),
            self.instance_bias.copy(),
            self.instance_factor_bias.copy(),
            self.item_factor_bias.copy(),
            self.item_weights.copy(),
            self.instance_weights.copy(),
            self.utility_std,
            self.item_base.copy(),
            self.item_log_gaps.copy(),
            self.instance_offsets.copy(),
            self.levels,
        )

    def is_finite(self) -> bool:
        return all(
            bool(np.all(np.isfinite(a)))
            for a in (
                self.item_bias,
                self.instance_bias,
                self.instance_factor_bias,
                self.item_factor_bias,
                self.item_weights,
                self.instance_weights,
                self.item_log_gaps,
                self.instance_offsets,
            )
        )


@dataclass
class PosteriorTables:
    """Smoothed factor posteriors: one row per instance and one per item."""

    instance_probs: np.ndarray   # (D, K)
    item_probs: np.ndarray       # (N, S)

    @classmethod
    def uniform(cls, n_instances, n_instance_factors, n_items, n_item_factors):
        return cls(
            instance_probs=np.full((n_instances, n_instance_factors), 0.5),
            item_probs=np.full((n_items, n_item_factors), 0.5),
        )

    def copy(self) -> "PosteriorTables":
        return PosteriorTables(self.instance_probs.copy(), self.item_probs.copy())


def init_matrix_parameters(
    n_instances, n_items, n_instance_factors, n_item_factors, levels,
    init_std=0.01, rng=None, utility_std=1.0,
) -> MatrixCrbmParameters:
    """Zero biases/offsets, small random weights, centred even thresholds."""
    if rng is None:
        rng = np.random.default_rng()
    return MatrixCrbmParameters(
        item_bias=np.zeros(n_items),
        instance_bias=np.zeros(n_instances),
        instance_factor_bias=np.zeros(n_instance_factors),
        item_factor_bias=np.zeros(n_item_factors),
        item_weights=init_std * rng.standard_normal((n_items, n_instance_factors)),
        instance_weights=init_std * rng.standard_normal((n_instances, n_item_factors)),
        utility_std=float(utility_std),
        item_base=np.full(n_items, -(levels - 2) / 2.0),
        item_log_gaps=np.zeros((n_items, levels - 2)),
        instance_offsets=np.zeros((n_instances, levels - 1)),
        levels=levels,
    )


def cell_scale(params: MatrixCrbmParameters, d: int, i: int) -> OrdinalScale:
    """Effective ordinal scale of cell (d, i): item gaps shifted by instance offsets."""
    return OrdinalScale(
        base=float(params.item_base[i] + params.instance_offsets[d, 0]),
        log_gaps=params.item_log_gaps[i] + params.instance_offsets[d, 1:],
        levels=params.levels,
    )


def cell_thresholds(params: MatrixCrbmParameters, d: int, i: int) -> np.ndarray:
    """Strictly increasing thresholds for one cell."""
    return cell_scale(params, d, i).thresholds()


def cell_utility_mean(params: MatrixCrbmParameters, h_d, g_i, d: int, i: int) -> float:
    """sigma^2 (alpha_i + beta_d + w_i . h_d + omega_d . g_i); factors may be real."""
    var = params.utility_std**2
    return float(
        var
        * (
            params.item_bias[i]
            + params.instance_bias[d]
            + params.item_weights[i] @ np.asarray(h_d, dtype=float)
            + params.instance_weights[d] @ np.asarray(g_i, dtype=float)
        )
    )


def column_view(params: MatrixCrbmParameters, item_probs, d: int, items) -> VectorCrbmParameters:
    """Vector-model view of instance d with item factors frozen at their posteriors.

    The instance bias and the frozen item-factor terms are absorbed into the
    per-item visible bias, so every vector-phase operation applies as is.
    """
    items = np.asarray(items, dtype=int)
    bias = (
        params.item_bias[items]
        + params.instance_bias[d]
        + item_probs[items] @ params.instance_weights[d]
    )
    offsets = params.instance_offsets[d]
    scales = [
        OrdinalScale(
            base=float(params.item_base[i] + offsets[0]),
            log_gaps=params.item_log_gaps[i] + offsets[1:],
            levels=params.levels,
        )
        for i in items
    ]
    return VectorCrbmParameters(
        visible_bias=bias,
        factor_bias=params.instance_factor_bias.copy(),
        weights=params.item_weights[items].copy(),
        utility_std=np.full(items.size, params.utility_std),
        scales=scales,
    )


def row_view(params: MatrixCrbmParameters, instance_probs, i: int, instances) -> VectorCrbmParameters:
    """Mirror of column_view: visible units are the instances that rated item i."""
    instances = np.asarray(instances, dtype=int)
    bias = (
        params.item_bias[i]
        + params.instance_bias[instances]
        + instance_probs[instances] @ params.item_weights[i]
    )
    scales = [
        OrdinalScale(
            base=float(params.item_base[i] + params.instance_offsets[d, 0]),
            log_gaps=params.item_log_gaps[i] + params.instance_offsets[d, 1:],
            levels=params.levels,
        )
        for d in instances
    ]
    return VectorCrbmParameters(
        visible_bias=bias,
        factor_bias=params.item_factor_bias.copy(),
        weights=params.instance_weights[instances].copy(),
        utility_std=np.full(instances.size, params.utility_std),
        scales=scales,
    )


def smooth_posteriors(previous, estimate, eta: float) -> np.ndarray:
    """Exponential smoothing of factor posteriors along the training trajectory."""
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    return eta * np.asarray(previous, dtype=float) + (1.0 - eta) * np.asarray(estimate, dtype=float)


def _view_phases(view, levels, clamped_row, free_row, config, rng):
    """Run the clamped and free phases of one view; return the per-view statistics.

    Returns (h_clamped, act_clamped, tm, good, h_free, act_free, mu_free)
    where tm holds the clamped truncated utility means and good flags cells
    whose interval mass stayed representable.
    """
    n = view.n_visible
    local_items = np.arange(n)
    table = threshold_table(view)

    state = GibbsState(np.zeros(n), clamped_row)
    for _ in range(config.cd_sweeps):
        state = gibbs_sweep(state, local_items, levels, view, rng, table=table)
    mu = utility_means(view, state.factors)
    tm, good = truncated_mean_masked(
        mu, view.utility_std, table[local_items, levels - 1], table[local_items, levels]
    )
    act_c = factor_activations(view, state.utilities)

    h_f = free_row if config.persistent else state.factors.copy()
    p_f = None
    for _ in range(config.cd_sweeps):
        mu_f = utility_means(view, h_f)
        u_f = rng.normal(mu_f, view.utility_std)
        p_f = factor_activations(view, u_f)
        h_f = (rng.random(h_f.size) < p_f).astype(float)
    mu_f = utility_means(view, h_f)
    return state.factors, act_c, tm, good, h_f, p_f, mu_f


def _epoch_pass_columns(instances, params, posteriors, chains, config, rng, lr):
    """Column-wise sweep: update alpha, beta, gamma, w, gaps, offsets; refresh h-hat."""
    active = [d for d in range(params.n_instances) if instances[d][0].size > 0]
    order = rng.permutation(len(active))
    for start in range(0, len(active), config.minibatch):
        batch = [active[j] for j in order[start : start + config.minibatch]]
        d_alpha = np.zeros(params.n_items)
        d_beta = np.zeros(params.n_instances)
        d_gamma = np.zeros(params.n_instance_factors)
        d_w = np.zeros_like(params.item_weights)
        d_tau = np.zeros_like(params.item_log_gaps)
        d_kappa = np.zeros_like(params.instance_offsets)
        cells = 0
        for d in batch:
            items, levels = instances[d]
            view = column_view(params, posteriors.item_probs, d, items)
            h_c, act_c, tm, good, h_f, act_f, mu_f = _view_phases(
                view, levels, chains.clamped_h[d], chains.free_h[d], config, rng
            )
            chains.clamped_h[d] = h_c
            chains.free_h[d] = h_f

            diff_vb = np.where(good, tm - mu_f, 0.0)
            d_alpha[items] += diff_vb
            d_beta[d] += float(diff_vb.sum())
            d_gamma += act_c - act_f
            d_w[items] += np.where(
                good[:, None], tm[:, None] * h_c[None, :] - mu_f[:, None] * h_f[None, :], 0.0
            )

            local = [(np.arange(items.size), levels)]
            tg = threshold_gradient(local, [0], h_c[None, :], view)
            for j, i in enumerate(items):
                d_tau[i] += tg.d_log_gaps[j]
            d_kappa[d, 0] += float(tg.d_base.sum())
            if items.size:
                d_kappa[d, 1:] += np.sum(np.stack(tg.d_log_gaps), axis=0)

            posteriors.instance_probs[d] = smooth_posteriors(
                posteriors.instance_probs[d], act_c, config.eta
            )
            cells += int(items.size)
        if cells:
            params.item_bias += lr * d_alpha / cells
            params.instance_bias += lr * d_beta / cells
            params.instance_factor_bias += lr * d_gamma / cells
            params.item_weights += lr * d_w / cells
            params.item_log_gaps += lr * d_tau / cells
            params.instance_offsets += lr * d_kappa / cells


def _epoch_pass_rows(items_index, params, posteriors, chains, config, rng, lr):
    """Row-wise sweep: update xi and omega; refresh g-hat."""
    active = [i for i in range(params.n_items) if items_index[i][0].size > 0]
    order = rng.permutation(len(active))
    for start in range(0, len(active), config.minibatch):
        batch = [active[j] for j in order[start : start + config.minibatch]]
        d_xi = np.zeros(params.n_item_factors)
        d_omega = np.zeros_like(params.instance_weights)
        cells = 0
        for i in batch:
            instances_of_i, levels = items_index[i]
            view = row_view(params, posteriors.instance_probs, i, instances_of_i)
            g_c, act_c, tm, good, g_f, act_f, mu_f = _view_phases(
                view, levels, chains.clamped_g[i], chains.free_g[i], config, rng
            )
            chains.clamped_g[i] = g_c
            chains.free_g[i] = g_f

            d_xi += act_c - act_f
            d_omega[instances_of_i] += np.where(
                good[:, None], tm[:, None] * g_c[None, :] - mu_f[:, None] * g_f[None, :], 0.0
            )
            posteriors.item_probs[i] = smooth_posteriors(
                posteriors.item_probs[i], act_c, config.eta
            )
            cells += int(instances_of_i.size)
        if cells:
            params.item_factor_bias += lr * d_xi / cells
            params.instance_weights += lr * d_omega / cells


@dataclass
class MatrixChains:
    """Clamped and free factor samples for both sides of the matrix model."""

    clamped_h: np.ndarray   # (D, K)
    free_h: np.ndarray      # (D, K)
    clamped_g: np.ndarray   # (N, S)
    free_g: np.ndarray      # (N, S)

    @classmethod
    def initialise(cls, n_instances, n_instance_factors, n_items, n_item_factors, rng):
        return cls(
            clamped_h=(rng.random((n_instances, n_instance_factors)) < 0.5).astype(float),
            free_h=(rng.random((n_instances, n_instance_factors)) < 0.5).astype(float),
            clamped_g=(rng.random((n_items, n_item_factors)) < 0.5).astype(float),
            free_g=(rng.random((n_items, n_item_factors)) < 0.5).astype(float),
        )


def structured_mean_field_epoch(
    train, params, posteriors, chains, config: TrainConfig, rng, lr=None
):
    """One alternation of the column-wise and row-wise conditional passes."""
    if lr is None:
        lr = config.learning_rate
    instances = train.per_instance()
    items_index = train.per_item()
    passes = (
        (_epoch_pass_columns, instances),
        (_epoch_pass_rows, items_index),
    )
    if not config.column_first:
        passes = passes[::-1]
    for fn, index in passes:
        fn(index, params, posteriors, chains, config, rng, lr)
    return params, posteriors


def predict_cell(params: MatrixCrbmParameters, posteriors: PosteriorTables, d, i) -> np.ndarray:
    """Level distribution for cell (d, i); None indices mean cold start.

    Cold instances fall back to maximum-entropy posteriors and zero offsets;
    cold items additionally fall back to the average item profile.
    """
    var = params.utility_std**2
    h_row = posteriors.instance_probs[d] if d is not None else np.full(params.n_instance_factors, 0.5)
    g_row = posteriors.item_probs[i] if i is not None else np.full(params.n_item_factors, 0.5)
    beta = params.instance_bias[d] if d is not None else 0.0
    offsets = params.instance_offsets[d] if d is not None else np.zeros(params.levels - 1)
    if i is not None:
        alpha = params.item_bias[i]
        w_row = params.item_weights[i]
        base = params.item_base[i]
        gaps = params.item_log_gaps[i]
    else:
        alpha = float(params.item_bias.mean())
        w_row = params.item_weights.mean(axis=0)
        base = float(params.item_base.mean())
        gaps = params.item_log_gaps.mean(axis=0)
    omega_row = params.instance_weights[d] if d is not None else np.zeros(params.n_item_factors)
    mu = var * (alpha + beta + w_row @ h_row + omega_row @ g_row)
    scale = OrdinalScale(base=float(base + offsets[0]), log_gaps=gaps + offsets[1:], levels=params.levels)
    z = (scale.thresholds() - mu) / params.utility_std
    padded = np.concatenate([[-np.inf], z, [np.inf]])
    return _mass_std(padded[:-1], padded[1:])


def matrix_heldout_metrics(params, posteriors, targets, floor=1e-12):
    """Mean per-cell log-likelihood plus RMSE/MAE over held-out cells."""
    from .inference import point_predictions

    total_log = 0.0
    sq = 0.0
    ab = 0.0
    n = 0
    for d, i, level in targets.iter_entries():
        probs = predict_cell(params, posteriors, d, i)
        total_log += float(np.log(max(float(probs[level - 1]), floor)))
        mean, map_level = point_predictions(probs)
        sq += (mean - level) ** 2
        ab += abs(map_level - level)
        n += 1
    if n == 0:
        return float("nan"), float("nan"), float("nan")
    return total_log / n, float(np.sqrt(sq / n)), ab / n


def train_matrix(train, valid, config: TrainConfig, rng):
    """Alternating structured mean-field epochs with validation early stopping.

    Returns (params, posteriors, records).
    """
    params = init_matrix_parameters(
        train.n_instances,
        train.n_items,
        config.n_factors,
        config.n_item_factors,
        int(max(train.item_levels)),
        init_std=config.init_std,
        rng=rng,
        utility_std=config.utility_std,
    )
    posteriors = PosteriorTables.uniform(
        params.n_instances, params.n_instance_factors, params.n_items, params.n_item_factors
    )
    chains = MatrixChains.initialise(
        params.n_instances, params.n_instance_factors, params.n_items, params.n_item_factors, rng
    )
    records = []
    best = -np.inf
    stale = 0
    for epoch in range(1, config.epochs + 1):
        started = time.monotonic()
        lr = config.rate_at(epoch)
        structured_mean_field_epoch(train, params, posteriors, chains, config, rng, lr)
        if not params.is_finite():
            raise TrainingDivergedError(f"non-finite parameters after epoch {epoch}")
        train_pll, _, _ = matrix_heldout_metrics(params, posteriors, train)
        if valid is not None:
            valid_pll, valid_rmse, valid_mae = matrix_heldout_metrics(params, posteriors, valid)
        else:
            valid_pll = valid_rmse = valid_mae = float("nan")
        records.append(
            EpochRecord(epoch, train_pll, valid_pll, valid_rmse, valid_mae,
                        time.monotonic() - started)
        )
        if valid is not None:
            if valid_pll > best:
                best = valid_pll
                stale = 0
            else:
                stale += 1
                if stale > config.patience:
                    break
    return params, posteriors, records
