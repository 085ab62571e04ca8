"""Posterior inference over hidden factors and ordinal-level prediction.

Observed levels clamp each utility into its threshold interval, so the
layer-wise Gibbs sweep alternates truncated-Gaussian utility draws with
Bernoulli factor draws.  The mean-field routine replaces both with their
conditional expectations and iterates to a fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    VectorCrbmParameters,
    factor_activations,
    level_probabilities,
    observation_bounds,
    threshold_table,
    utility_means,
)
from .truncnorm import sample_truncated_batch, truncated_mean_batch

MEANFIELD_MAX_ITERS = 50
MEANFIELD_TOL = 1e-6
MCMC_BURN_IN = 50
MCMC_SAMPLES = 200


@dataclass
class GibbsState:
    """One (utilities, factors) sample; utilities align with the observed items."""

    utilities: np.ndarray
    factors: np.ndarray


@dataclass
class MeanFieldState:
    """Factorised posterior: factor probabilities and clamped utility means."""

    factor_probs: np.ndarray
    utility_means: np.ndarray
    iterations: int
    converged: bool


def gibbs_init(items, levels, params: VectorCrbmParameters, rng) -> GibbsState:
    factors = (rng.random(params.n_factors) < 0.5).astype(float)
    state = GibbsState(utilities=np.zeros(len(items)), factors=factors)
    return gibbs_sweep(state, items, levels, params, rng)


def gibbs_sweep(
    state: GibbsState, items, levels, params: VectorCrbmParameters, rng, table=None
) -> GibbsState:
    """One full sweep: truncated utility draws given h, then factor draws given u."""
    lowers, uppers = observation_bounds(params, items, levels, table=table)
    mu = utility_means(params, state.factors, items)
    stds = params.utility_std[items]
    u = sample_truncated_batch(mu, stds, lowers, uppers, rng)
    p = factor_activations(params, u, items)
    h = (rng.random(params.n_factors) < p).astype(float)
    return GibbsState(utilities=u, factors=h)


def factor_posterior_mcmc(
    items,
    levels,
    params: VectorCrbmParameters,
    n_samples: int = MCMC_SAMPLES,
    burn_in: int = MCMC_BURN_IN,
    rng=None,
    rao_blackwell: bool = True,
) -> np.ndarray:
    """Posterior factor activation estimated from a Gibbs chain.

    With ``rao_blackwell`` the chain averages P(h_k=1|u) instead of the binary
    draws, which has the same expectation at lower variance.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    table = threshold_table(params)
    state = gibbs_init(items, levels, params, rng)
    for _ in range(burn_in):
        state = gibbs_sweep(state, items, levels, params, rng, table=table)
    acc = np.zeros(params.n_factors)
    for _ in range(n_samples):
        state = gibbs_sweep(state, items, levels, params, rng, table=table)
        if rao_blackwell:
            acc += factor_activations(params, state.utilities, items)
        else:
            acc += state.factors
    return acc / n_samples


def factor_posterior_meanfield(
    items,
    levels,
    params: VectorCrbmParameters,
    max_iters: int = MEANFIELD_MAX_ITERS,
    tol: float = MEANFIELD_TOL,
) -> MeanFieldState:
    """Coordinate-ascent fixed point of the factorised posterior.

    Alternates the logistic factor update with truncated-mean utility updates
    until the factor probabilities move less than ``tol``.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if not tol > 0:
        raise ValueError("tol must be positive")
    items = np.asarray(items, dtype=int)
    levels = np.asarray(levels, dtype=int)
    lowers, uppers = observation_bounds(params, items, levels)
    stds = params.utility_std[items]

    q = np.full(params.n_factors, 0.5)
    u_mean = truncated_mean_batch(
        utility_means(params, np.zeros(params.n_factors), items), stds, lowers, uppers
    )
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        q_new = factor_activations(params, u_mean, items)
        u_mean = truncated_mean_batch(
            utility_means(params, q_new, items), stds, lowers, uppers
        )
        delta = float(np.max(np.abs(q_new - q))) if q.size else 0.0
        q = q_new
        if delta < tol:
            converged = True
            break
    return MeanFieldState(
        factor_probs=q, utility_means=u_mean, iterations=iterations, converged=converged
    )


def predict_mcmc(
    items,
    levels,
    params: VectorCrbmParameters,
    target: int,
    n_samples: int = MCMC_SAMPLES,
    burn_in: int = MCMC_BURN_IN,
    rng=None,
) -> np.ndarray:
    """Predictive level distribution for an unseen variable, by chain averaging."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if target in set(np.asarray(items).tolist()):
        raise ValueError(f"target variable {target} is already observed")
    if rng is None:
        rng = np.random.default_rng()
    table = threshold_table(params)
    state = gibbs_init(items, levels, params, rng)
    for _ in range(burn_in):
        state = gibbs_sweep(state, items, levels, params, rng, table=table)
    acc = np.zeros(params.scales[target].levels)
    for _ in range(n_samples):
        state = gibbs_sweep(state, items, levels, params, rng, table=table)
        acc += level_probabilities(params, state.factors, target)
    return acc / n_samples


def predict_variational(
    items,
    levels,
    params: VectorCrbmParameters,
    target: int,
    max_iters: int = MEANFIELD_MAX_ITERS,
    tol: float = MEANFIELD_TOL,
) -> np.ndarray:
    """Predictive level distribution evaluated at the mean-field posterior."""
    if target in set(np.asarray(items).tolist()):
        raise ValueError(f"target variable {target} is already observed")
    mf = factor_posterior_meanfield(items, levels, params, max_iters=max_iters, tol=tol)
    return level_probabilities(params, mf.factor_probs, target)


def point_predictions(dist: np.ndarray) -> tuple[float, int]:
    """(numerical mean, MAP level) from one level distribution.

    The mean feeds squared-error scoring; the MAP level feeds absolute-error
    scoring, with ties broken toward the lower level.
    """
    dist = np.asarray(dist, dtype=float)
    levels = np.arange(1, dist.size + 1)
    mean = float(levels @ dist)
    map_level = int(np.argmax(dist)) + 1
    return mean, map_level
