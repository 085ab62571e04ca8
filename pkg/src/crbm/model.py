"""Parameter containers and closed-form conditionals of the cumulative RBM.

The model couples N ordinal variables to K binary factors through latent
Gaussian utilities.  Each variable owns an ordinal scale: a fixed base
threshold plus exponentiated log-gaps, which keeps the thresholds strictly
increasing under any parameter value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import OutOfRangeLevelError
from .truncnorm import Interval, _mass_std

DEFAULT_INIT_STD = 0.01


@dataclass
class OrdinalScale:
    """Thresholds for one ordinal variable with L levels.

    The first threshold is the fixed ``base``; each later threshold adds
    exp(log_gap), so ordering is guaranteed by construction.  ``log_gaps``
    holds the L-2 free gap parameters (empty when L == 2).
    """

    base: float
    log_gaps: np.ndarray
    levels: int

    def __post_init__(self):
        self.log_gaps = np.asarray(self.log_gaps, dtype=float)
        if self.levels < 2:
            raise ValueError("an ordinal scale needs at least 2 levels")
        if self.log_gaps.shape != (self.levels - 2,):
            raise ValueError(
                f"expected {self.levels - 2} log-gaps for {self.levels} levels, "
                f"got {self.log_gaps.shape}"
            )

    def thresholds(self) -> np.ndarray:
        """The L-1 strictly increasing cutpoints."""
        out = np.empty(self.levels - 1)
        out[0] = self.base
        out[1:] = self.base + np.cumsum(np.exp(self.log_gaps))
        return out

    def copy(self) -> "OrdinalScale":
        return OrdinalScale(self.base, self.log_gaps.copy(), self.levels)


def even_scale(levels: int, base: float | None = None) -> OrdinalScale:
    """Unit-gap scale; by default centred so the thresholds straddle zero."""
    if base is None:
        base = -(levels - 2) / 2.0
    return OrdinalScale(base=base, log_gaps=np.zeros(levels - 2), levels=levels)


def utility_interval(scale: OrdinalScale, level: int) -> Interval:
    """The utility domain selecting the given level: (theta_{l-1}, theta_l]."""
    if not 1 <= level <= scale.levels:
        raise OutOfRangeLevelError(f"level {level} outside 1..{scale.levels}")
    th = scale.thresholds()
    lower = -math.inf if level == 1 else float(th[level - 2])
    upper = math.inf if level == scale.levels else float(th[level - 1])
    return Interval(lower, upper)


def level_bounds(scale: OrdinalScale, levels: np.ndarray):
    """Vectorised (lower, upper) utility bounds for an array of levels."""
    th = scale.thresholds()
    padded = np.concatenate([[-np.inf], th, [np.inf]])
    levels = np.asarray(levels)
    if np.any((levels < 1) | (levels > scale.levels)):
        raise OutOfRangeLevelError(f"levels outside 1..{scale.levels}")
    return padded[levels - 1], padded[levels]


@dataclass
class VectorCrbmParameters:
    """Biases, weights, utility scales, and per-variable ordinal scales."""

    visible_bias: np.ndarray      # alpha, shape (N,)
    factor_bias: np.ndarray       # gamma, shape (K,)
    weights: np.ndarray           # shape (N, K)
    utility_std: np.ndarray       # shape (N,), all positive
    scales: list = field(default_factory=list)

    def __post_init__(self):
        self.visible_bias = np.asarray(self.visible_bias, dtype=float)
        self.factor_bias = np.asarray(self.factor_bias, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.utility_std = np.asarray(self.utility_std, dtype=float)
        n, k = self.weights.shape
        if self.visible_bias.shape != (n,) or self.factor_bias.shape != (k,):
            raise ValueError("bias shapes inconsistent with weights")
        if self.utility_std.shape != (n,) or np.any(self.utility_std <= 0):
            raise ValueError("utility_std must be positive with one entry per variable")
        if len(self.scales) != n:
            raise ValueError("need one ordinal scale per variable")

    @property
    def n_visible(self) -> int:
        return self.weights.shape[0]

    @property
    def n_factors(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "VectorCrbmParameters":
        return VectorCrbmParameters(
            self.visible_bias.copy(),
            self.factor_bias.copy(),
            self.weights.copy(),
            self.utility_std.copy(),
            [s.copy() for s in self.scales],
        )

    def is_finite(self) -> bool:
        return (
            bool(np.all(np.isfinite(self.visible_bias)))
            and bool(np.all(np.isfinite(self.factor_bias)))
            and bool(np.all(np.isfinite(self.weights)))
            and all(np.all(np.isfinite(s.log_gaps)) for s in self.scales)
        )


def init_parameters(
    n_visible: int,
    n_factors: int,
    scales,
    init_std: float = DEFAULT_INIT_STD,
    rng: np.random.Generator | None = None,
    utility_std: float = 1.0,
) -> VectorCrbmParameters:
    """Fresh parameters: small random weights, zero biases, even thresholds.

    ``scales`` is either a list of OrdinalScale (used as given) or a list of
    level counts, each turned into an independent centred unit-gap scale.
    """
    if n_visible <= 0 or n_factors < 0:
        raise ValueError("dimensions must be positive (factors may be zero)")
    if rng is None:
        rng = np.random.default_rng()
    built = [s if isinstance(s, OrdinalScale) else even_scale(int(s)) for s in scales]
    if len(built) != n_visible:
        raise ValueError("need one scale (or level count) per variable")
    weights = init_std * rng.standard_normal((n_visible, n_factors))
    return VectorCrbmParameters(
        visible_bias=np.zeros(n_visible),
        factor_bias=np.zeros(n_factors),
        weights=weights,
        utility_std=np.full(n_visible, float(utility_std)),
        scales=built,
    )


def utility_means(params: VectorCrbmParameters, factors, items=None) -> np.ndarray:
    """Conditional utility means sigma_i^2 (alpha_i + w_i . h).

    ``factors`` may be binary or real-valued in [0, 1]; ``items`` restricts
    the result to a subset of variables.
    """
    factors = np.asarray(factors, dtype=float)
    if items is None:
        w = params.weights
        alpha = params.visible_bias
        var = params.utility_std**2
    else:
        w = params.weights[items]
        alpha = params.visible_bias[items]
        var = params.utility_std[items] ** 2
    return var * (alpha + w @ factors)


def level_probabilities(params: VectorCrbmParameters, factors, i: int) -> np.ndarray:
    """Distribution over variable i's levels given (binary or mean) factors."""
    mu = float(utility_means(params, factors, np.array([i]))[0])
    scale = params.scales[i]
    std = float(params.utility_std[i])
    z = (scale.thresholds() - mu) / std
    padded = np.concatenate([[-np.inf], z, [np.inf]])
    return _mass_std(padded[:-1], padded[1:])


def factor_activations(params: VectorCrbmParameters, utilities, items=None) -> np.ndarray:
    """P(h_k = 1 | u) for every factor, summing only over the given items."""
    utilities = np.asarray(utilities, dtype=float)
    w = params.weights if items is None else params.weights[items]
    return expit(params.factor_bias + utilities @ w)


def threshold_table(params: VectorCrbmParameters) -> np.ndarray:
    """Padded threshold matrix: row i is [-inf, theta_i1..theta_i(L-1), +inf...].

    Cell bounds for level l are columns l-1 and l, which works across
    heterogeneous level counts because levels never exceed the row's own L.
    """
    max_levels = max(s.levels for s in params.scales)
    table = np.full((params.n_visible, max_levels + 1), np.inf)
    table[:, 0] = -np.inf
    for i, scale in enumerate(params.scales):
        table[i, 1:scale.levels] = scale.thresholds()
    return table


def observation_bounds(params: VectorCrbmParameters, items, levels, table=None):
    """Per-cell utility bounds for observed (item, level) pairs."""
    if table is None:
        table = threshold_table(params)
    items = np.asarray(items)
    levels = np.asarray(levels)
    return table[items, levels - 1], table[items, levels]
