"""Stochastic maximum-likelihood training with double persistent chains.

Both phases of the gradient need sampling here: the clamped phase runs one
Markov chain per data instance with utilities truncated to their observed
intervals, while the free phase runs unconstrained chains (shared when every
instance observes every variable, one per instance otherwise).  Utility
statistics are integrated analytically given the factor samples, which is
cheaper in variance than using the raw draws.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import TrainingDivergedError
from .inference import GibbsState, gibbs_sweep
from .model import (
    VectorCrbmParameters,
    factor_activations,
    init_parameters,
    threshold_table,
    utility_means,
)
from .truncnorm import MASS_FLOOR, _mass_std, std_normal_pdf, truncated_mean_masked


@dataclass
class TrainConfig:
    """Knobs for vector and matrix training runs."""

    n_factors: int
    n_item_factors: int = 0          # matrix mode only
    learning_rate: float = 0.01
    epochs: int = 30
    minibatch: int = 100
    cd_sweeps: int = 1
    free_chains: int = 100
    persistent: bool = True
    eta: float = 0.7                 # posterior smoothing (matrix mode)
    patience: int = 3
    init_std: float = 0.01
    utility_std: float = 1.0
    lr_decay: float = 0.0            # linear decay toward (1 - lr_decay) * lr
    column_first: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_factors < 0 or self.n_item_factors < 0:
            raise ValueError("factor counts must be nonnegative")
        if not 0 < self.learning_rate:
            raise ValueError("learning_rate must be positive")
        if self.cd_sweeps < 1 or self.epochs < 1 or self.minibatch < 1:
            raise ValueError("cd_sweeps, epochs and minibatch must be >= 1")
        if self.free_chains < 1:
            raise ValueError("need at least one free chain")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if not 0 <= self.lr_decay < 1:
            raise ValueError("lr_decay must lie in [0, 1)")

    def rate_at(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch under optional linear decay."""
        if self.lr_decay == 0 or self.epochs == 1:
            return self.learning_rate
        frac = (epoch - 1) / (self.epochs - 1)
        return self.learning_rate * (1.0 - self.lr_decay * frac)


@dataclass
class EssAccumulator:
    """Sums of the sufficient statistics {u_i, u_i h_k, h_k} over samples."""

    d_visible_bias: np.ndarray
    d_factor_bias: np.ndarray
    d_weights: np.ndarray
    count: int = 0

    @classmethod
    def zeros(cls, n_visible: int, n_factors: int) -> "EssAccumulator":
        return cls(
            d_visible_bias=np.zeros(n_visible),
            d_factor_bias=np.zeros(n_factors),
            d_weights=np.zeros((n_visible, n_factors)),
        )

    def normalized(self) -> "EssAccumulator":
        """Per-observed-cell averages, so ragged batches stay scale-comparable."""
        if self.count <= 0:
            raise ValueError("cannot normalise an empty accumulator")
        return EssAccumulator(
            self.d_visible_bias / self.count,
            self.d_factor_bias / self.count,
            self.d_weights / self.count,
            count=1,
        )


@dataclass
class ThresholdGradients:
    """Per-variable gradients of the log-gap parameters (and threshold bases)."""

    d_base: np.ndarray
    d_log_gaps: list
    count: int = 0

    @classmethod
    def zeros(cls, params: VectorCrbmParameters) -> "ThresholdGradients":
        return cls(
            d_base=np.zeros(params.n_visible),
            d_log_gaps=[np.zeros(s.levels - 2) for s in params.scales],
        )

    def normalized(self) -> "ThresholdGradients":
        if self.count <= 0:
            raise ValueError("cannot normalise an empty accumulator")
        return ThresholdGradients(
            self.d_base / self.count,
            [g / self.count for g in self.d_log_gaps],
            count=1,
        )


@dataclass
class ChainState:
    """Persistent Markov-chain storage: binary factor samples only."""

    clamped_factors: np.ndarray   # (D, K)
    free_factors: np.ndarray      # (C, K) shared, or (D, K) per instance
    per_instance_free: bool

    @classmethod
    def initialise(
        cls, n_instances, n_factors, free_chains, per_instance_free, rng
    ) -> "ChainState":
        clamped = (rng.random((n_instances, n_factors)) < 0.5).astype(float)
        rows = n_instances if per_instance_free else free_chains
        free = (rng.random((rows, n_factors)) < 0.5).astype(float)
        return cls(clamped, free, per_instance_free)


@dataclass
class EpochRecord:
    epoch: int
    train_pll: float
    valid_pll: float
    valid_rmse: float
    valid_mae: float
    seconds: float


def clamped_phase_ess(
    instances, batch, chains: ChainState, params: VectorCrbmParameters, cd_sweeps, rng
):
    """Advance each instance's clamped chain and accumulate posterior statistics.

    Returns (accumulator, skipped) where skipped counts cells whose interval
    mass underflowed and were left out of the utility statistics.
    """
    table = threshold_table(params)
    acc = EssAccumulator.zeros(params.n_visible, params.n_factors)
    skipped = 0
    for d in batch:
        items, levels = instances[d]
        if items.size == 0:
            continue
        state = GibbsState(np.zeros(items.size), chains.clamped_factors[d])
        for _ in range(cd_sweeps):
            state = gibbs_sweep(state, items, levels, params, rng, table=table)
        chains.clamped_factors[d] = state.factors

        mu = utility_means(params, state.factors, items)
        stds = params.utility_std[items]
        tm, good = truncated_mean_masked(mu, stds, table[items, levels - 1], table[items, levels])
        if not np.all(good):
            skipped += int(np.sum(~good))
            sub, tm_good = items[good], tm[good]
        else:
            sub, tm_good = items, tm
        acc.d_visible_bias[sub] += tm_good
        acc.d_weights[sub] += tm_good[:, None] * state.factors[None, :]
        acc.d_factor_bias += factor_activations(params, state.utilities, items)
        acc.count += int(items.size)
    return acc, skipped


def free_phase_ess(
    instances, batch, chains: ChainState, params: VectorCrbmParameters, cd_sweeps, rng
) -> EssAccumulator:
    """Advance free-phase chains (no truncation) and accumulate model statistics."""
    acc = EssAccumulator.zeros(params.n_visible, params.n_factors)
    if chains.per_instance_free:
        for d in batch:
            items, levels = instances[d]
            if items.size == 0:
                continue
            stds = params.utility_std[items]
            h = chains.free_factors[d]
            p = None
            for _ in range(cd_sweeps):
                mu = utility_means(params, h, items)
                u = rng.normal(mu, stds)
                p = factor_activations(params, u, items)
                h = (rng.random(params.n_factors) < p).astype(float)
            chains.free_factors[d] = h
            mu = utility_means(params, h, items)
            acc.d_visible_bias[items] += mu
            acc.d_weights[items] += mu[:, None] * h[None, :]
            acc.d_factor_bias += p
            acc.count += int(items.size)
    else:
        h = chains.free_factors
        var = params.utility_std**2
        p = None
        for _ in range(cd_sweeps):
            mu = (params.visible_bias + h @ params.weights.T) * var
            u = rng.normal(mu, params.utility_std)
            p = expit(params.factor_bias + u @ params.weights)
            h = (rng.random(p.shape) < p).astype(float)
        chains.free_factors = h
        mu = (params.visible_bias + h @ params.weights.T) * var
        acc.d_visible_bias += mu.sum(axis=0)
        acc.d_weights += mu.T @ h
        acc.d_factor_bias += p.sum(axis=0)
        acc.count += int(h.shape[0]) * params.n_visible
    return acc


def threshold_gradient(
    instances, batch, clamped_factors, params: VectorCrbmParameters
) -> ThresholdGradients:
    """Boundary-density gradients of the log-gap (and base) threshold parameters.

    Each observed cell contributes the truncated density at its upper boundary
    (when one exists) minus the density at its lower boundary, chained through
    d(theta_l)/d(tau_m) = exp(tau_m) for the gaps and 1 for the base.
    """
    table = threshold_table(params)
    grads = ThresholdGradients.zeros(params)
    gap_cache = {}
    for d in batch:
        items, levels = instances[d]
        if items.size == 0:
            continue
        h = clamped_factors[d]
        mu = utility_means(params, h, items)
        stds = params.utility_std[items]
        lowers = table[items, levels - 1]
        uppers = table[items, levels]
        mass = _mass_std((lowers - mu) / stds, (uppers - mu) / stds)
        good = mass >= MASS_FLOOR
        safe = np.where(good, mass, 1.0)
        dens_up = np.where(good, std_normal_pdf((uppers - mu) / stds) / stds / safe, 0.0)
        dens_lo = np.where(good, std_normal_pdf((lowers - mu) / stds) / stds / safe, 0.0)
        for j in range(items.size):
            i = int(items[j])
            lvl = int(levels[j])
            scale = params.scales[i]
            key = id(scale)
            gaps = gap_cache.get(key)
            if gaps is None:
                gaps = np.exp(scale.log_gaps)
                gap_cache[key] = gaps
            if lvl < scale.levels:
                grads.d_base[i] += dens_up[j]
                grads.d_log_gaps[i][: lvl - 1] += dens_up[j] * gaps[: lvl - 1]
            if lvl > 1:
                grads.d_base[i] -= dens_lo[j]
                grads.d_log_gaps[i][: lvl - 2] -= dens_lo[j] * gaps[: lvl - 2]
        grads.count += int(items.size)
    return grads


def gradient_step(
    params: VectorCrbmParameters,
    clamped: EssAccumulator,
    free: EssAccumulator,
    learning_rate: float,
    thresholds: ThresholdGradients | None = None,
) -> VectorCrbmParameters:
    """In-place ascent step from count-normalised accumulators."""
    params.visible_bias += learning_rate * (clamped.d_visible_bias - free.d_visible_bias)
    params.factor_bias += learning_rate * (clamped.d_factor_bias - free.d_factor_bias)
    params.weights += learning_rate * (clamped.d_weights - free.d_weights)
    if thresholds is not None:
        pending = {}
        for i, scale in enumerate(params.scales):
            entry = pending.setdefault(id(scale), [scale, np.zeros(scale.levels - 2)])
            entry[1] = entry[1] + thresholds.d_log_gaps[i]
        for scale, g in pending.values():
            scale.log_gaps += learning_rate * g
    return params


def train_vector(train, valid, config: TrainConfig, rng) -> tuple:
    """Epochs of minibatch updates with early stopping on validation likelihood.

    ``train`` and ``valid`` are observation sets over the same instance
    indexing (``valid`` may be None to disable early stopping).  Returns the
    trained parameters and the per-epoch records.
    """
    from .metrics import dataset_pseudo_log_likelihood, heldout_metrics

    instances = train.per_instance()
    if not any(items.size for items, _ in instances):
        raise ValueError("training set has no observed cells")
    valid_instances = valid.per_instance() if valid is not None else None

    params = init_parameters(
        train.n_items,
        config.n_factors,
        [int(levels) for levels in train.item_levels],
        init_std=config.init_std,
        rng=rng,
        utility_std=config.utility_std,
    )
    per_instance_free = (not train.fully_observed()) or (not config.persistent)
    chains = ChainState.initialise(
        train.n_instances, config.n_factors, config.free_chains, per_instance_free, rng
    )
    active = np.array([d for d in range(train.n_instances) if instances[d][0].size > 0])

    records = []
    best = -np.inf
    stale = 0
    for epoch in range(1, config.epochs + 1):
        started = time.monotonic()
        lr = config.rate_at(epoch)
        order = rng.permutation(active.size)
        for start in range(0, active.size, config.minibatch):
            batch = active[order[start : start + config.minibatch]]
            if not config.persistent:
                chains.free_factors[batch] = chains.clamped_factors[batch]
            clamped, _ = clamped_phase_ess(instances, batch, chains, params, config.cd_sweeps, rng)
            tg = threshold_gradient(instances, batch, chains.clamped_factors, params)
            free = free_phase_ess(instances, batch, chains, params, config.cd_sweeps, rng)
            gradient_step(params, clamped.normalized(), free.normalized(), lr, tg.normalized())
        if not params.is_finite():
            raise TrainingDivergedError(f"non-finite parameters after epoch {epoch}")

        train_pll = dataset_pseudo_log_likelihood(params, instances)
        if valid_instances is not None:
            report = heldout_metrics(params, instances, valid_instances)
            valid_pll, valid_rmse, valid_mae = report.pll, report.rmse, report.mae
        else:
            valid_pll = valid_rmse = valid_mae = float("nan")
        records.append(
            EpochRecord(epoch, train_pll, valid_pll, valid_rmse, valid_mae,
                        time.monotonic() - started)
        )
        if valid_instances is not None:
            if valid_pll > best:
                best = valid_pll
                stale = 0
            else:
                stale += 1
                if stale > config.patience:
                    break
    return params, records


def write_training_log(path, records) -> None:
    """One row per epoch: likelihoods, validation errors, wall seconds."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch\ttrain_pll\tvalid_pll\tvalid_rmse\tvalid_mae\tseconds\n")
        for r in records:
            fh.write(
                f"{r.epoch}\t{r.train_pll:.6f}\t{r.valid_pll:.6f}\t"
                f"{r.valid_rmse:.6f}\t{r.valid_mae:.6f}\t{r.seconds:.3f}\n"
            )
