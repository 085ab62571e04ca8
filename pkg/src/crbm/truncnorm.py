"""Stable standard-normal CDF arithmetic and truncated-normal sampling.

All routines work on N(mean, std**2) restricted to an interval whose bounds
may be infinite.  Interval masses are always computed tail-stably (never as a
difference of two values both near 1).  The sampler picks a strategy per
regime -- plain retry where the interval holds real mass, exponential-proposal
rejection for far one-sided tails, uniform-proposal rejection for narrow
slices -- so the expected number of proposals stays bounded even for
intervals beyond 6 standard deviations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DegenerateMassError

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Interval masses below this have underflowed double precision for practical
# purposes; operations that must divide by the mass refuse to continue.
MASS_FLOOR = 1e-300

# Relative width below which a bounded interval is treated as a point.
_NARROW_WIDTH = 1e-12

# Sampler regime switches, in standardised units.  Chosen so the worst-case
# acceptance probability of every branch stays >= ~0.3.
_TAIL_SWITCH = 0.5      # near bound beyond this: exponential proposals
_PLAIN_MIN_MASS = 0.3   # minimum interval mass for the plain-retry branch
_EXP_MIN_RATIO = 0.5    # two-sided tail: minimum share of the one-sided mass
_MAX_REJECTION_PASSES = 200


@dataclass(frozen=True)
class Interval:
    """A utility domain (lower, upper); either bound may be infinite."""

    lower: float
    upper: float

    def __post_init__(self):
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError("interval bounds must not be NaN")
        if not self.lower < self.upper:
            raise ValueError(f"empty interval [{self.lower}, {self.upper}]")

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lower) and math.isfinite(self.upper)

    def contains(self, x: float) -> bool:
        """Membership in the closure of the interval."""
        return self.lower <= x <= self.upper


FULL_LINE = Interval(-math.inf, math.inf)


def std_normal_cdf(x):
    """Standard normal CDF, accurate in both tails (erfc-based)."""
    return ndtr(x)


def std_normal_pdf(z):
    """Standard normal density; zero at infinite arguments."""
    z = np.asarray(z, dtype=float)
    out = INV_SQRT_2PI * np.exp(-0.5 * z * z)
    if out.ndim == 0:
        return float(out)
    return out


def _mass_std(a, b):
    """P(a < Z <= b) for standard normal Z, computed tail-stably.

    Both bounds may be infinite; requires a < b elementwise.  When both bounds
    sit in the right tail the complementary CDF is differenced instead, so the
    result never comes from subtracting two values near 1.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    right = a > 0
    res = np.where(right, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))
    return np.maximum(res, 0.0)


def _standardize(means, stds, lowers, uppers):
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    a = (np.asarray(lowers, dtype=float) - means) / stds
    b = (np.asarray(uppers, dtype=float) - means) / stds
    return a, b


def interval_mass(mean: float, std: float, iv: Interval) -> float:
    """Probability that N(mean, std**2) lands in the interval.

    Raises DegenerateMassError when the mass underflows to (numerical) zero.
    """
    if not std > 0:
        raise ValueError("std must be positive")
    a, b = _standardize(mean, std, iv.lower, iv.upper)
    m = float(_mass_std(a, b))
    if m < MASS_FLOOR:
        raise DegenerateMassError(
            f"interval [{iv.lower}, {iv.upper}] carries no representable mass "
            f"under N({mean}, {std}^2)"
        )
    return m


def interval_mass_batch(means, stds, lowers, uppers) -> np.ndarray:
    """Raw interval masses for arrays of configurations; may contain zeros."""
    a, b = _standardize(means, stds, lowers, uppers)
    return _mass_std(a, b)


def truncated_mean(mean: float, std: float, iv: Interval) -> float:
    """First moment of N(mean, std**2) restricted to the interval."""
    if not std > 0:
        raise ValueError("std must be positive")
    a, b = _standardize(mean, std, iv.lower, iv.upper)
    if np.isinf(a) and np.isinf(b):
        return float(mean)
    if iv.bounded and (b - a) < _NARROW_WIDTH * max(1.0, abs(a), abs(b)):
        return 0.5 * (iv.lower + iv.upper)
    m = interval_mass(mean, std, iv)
    return float(mean + std * (std_normal_pdf(a) - std_normal_pdf(b)) / m)


def truncated_mean_batch(means, stds, lowers, uppers) -> np.ndarray:
    """Vectorised truncated means; raises if any interval mass underflows."""
    values, good = truncated_mean_masked(means, stds, lowers, uppers)
    if not np.all(good):
        raise DegenerateMassError(
            f"{int(np.sum(~good))} interval(s) carry no representable mass"
        )
    return values


def truncated_mean_masked(means, stds, lowers, uppers):
    """Like truncated_mean_batch but flags degenerate cells instead of raising.

    Returns (values, good) where values[~good] are the interval midpoints and
    good marks cells whose mass stayed above the underflow floor.
    """
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    lowers = np.asarray(lowers, dtype=float)
    uppers = np.asarray(uppers, dtype=float)
    a, b = _standardize(means, stds, lowers, uppers)
    mass = _mass_std(a, b)
    good = mass >= MASS_FLOOR
    safe_mass = np.where(good, mass, 1.0)
    values = means + stds * (std_normal_pdf(a) - std_normal_pdf(b)) / safe_mass

    bounded = np.isfinite(a) & np.isfinite(b)
    narrow = bounded & ((b - a) < _NARROW_WIDTH * np.maximum(1.0, np.maximum(np.abs(a), np.abs(b))))
    midpoint = 0.5 * (lowers + uppers)
    values = np.where(narrow | (bounded & ~good), midpoint, values)
    return values, good | narrow


def truncated_density_at(mean: float, std: float, iv: Interval, x: float) -> float:
    """Density of the truncated normal at x (x must lie in the closure of iv)."""
    if not iv.contains(x):
        raise ValueError(f"point {x} lies outside interval [{iv.lower}, {iv.upper}]")
    m = interval_mass(mean, std, iv)
    z = (x - mean) / std
    return float(std_normal_pdf(z) / std / m)


def sample_truncated(mean: float, std: float, iv: Interval, rng: np.random.Generator) -> float:
    """Draw one exact sample from N(mean, std**2) restricted to the interval."""
    out = sample_truncated_batch(
        np.array([mean]), np.array([std]), np.array([iv.lower]), np.array([iv.upper]), rng
    )
    return float(out[0])


def sample_truncated_batch(means, stds, lowers, uppers, rng: np.random.Generator) -> np.ndarray:
    """Draw one sample per configuration from truncated normals.

    All arguments broadcast to a common shape.  Degenerate (sub-ulp or
    mass-underflowed) bounded intervals fall back to their midpoint.
    """
    means, stds, lowers, uppers = np.broadcast_arrays(
        np.asarray(means, dtype=float),
        np.asarray(stds, dtype=float),
        np.asarray(lowers, dtype=float),
        np.asarray(uppers, dtype=float),
    )
    shape = means.shape
    means = means.ravel()
    stds = stds.ravel()
    lowers = lowers.ravel()
    uppers = uppers.ravel()
    n = means.size

    a = (lowers - means) / stds
    b = (uppers - means) / stds

    # Canonical orientation: reflect so the nearest finite bound faces the
    # right half-axis, leaving three cases -- unbounded, [a, inf), or a
    # two-sided interval with b >= 0.
    flip = np.isfinite(b) & (~np.isfinite(a) | (b < 0))
    a, b = np.where(flip, -b, a), np.where(flip, -a, b)

    z = np.empty(n, dtype=float)

    unbounded = ~np.isfinite(a) & ~np.isfinite(b)
    if np.any(unbounded):
        z[unbounded] = rng.standard_normal(int(np.sum(unbounded)))

    one_sided = np.isfinite(a) & ~np.isfinite(b)
    two_sided = np.isfinite(a) & np.isfinite(b)

    mass = np.zeros(n)
    if np.any(two_sided):
        mass[two_sided] = _mass_std(a[two_sided], b[two_sided])
    degenerate = two_sided & (
        (mass < MASS_FLOOR)
        | ((b - a) < _NARROW_WIDTH * np.maximum(1.0, np.maximum(np.abs(a), np.abs(b))))
    )
    z[degenerate] = 0.5 * (a[degenerate] + b[degenerate])
    live = two_sided & ~degenerate

    far = live & (a > _TAIL_SWITCH)
    tail_mass = np.ones(n)
    if np.any(far):
        tail_mass[far] = ndtr(-a[far])

    plain = (one_sided & (a <= _TAIL_SWITCH)) | (live & (mass >= _PLAIN_MIN_MASS))
    exponential = (one_sided & (a > _TAIL_SWITCH)) | (
        far & (mass < _PLAIN_MIN_MASS) & (mass >= _EXP_MIN_RATIO * tail_mass)
    )
    uniform = live & ~plain & ~exponential

    _plain_rejection(z, np.flatnonzero(plain), a, b, rng)
    _exponential_rejection(z, np.flatnonzero(exponential), a, b, rng)
    _uniform_rejection(z, np.flatnonzero(uniform), a, b, rng)

    z = np.where(flip, -z, z)
    out = means + stds * z
    return np.clip(out, lowers, uppers).reshape(shape)


def _plain_rejection(z, lanes, a, b, rng):
    """Retry standard-normal draws until they land inside [a, b]."""
    pending = lanes
    for _ in range(_MAX_REJECTION_PASSES):
        if pending.size == 0:
            return
        draw = rng.standard_normal(pending.size)
        ok = (draw >= a[pending]) & (draw <= b[pending])
        z[pending[ok]] = draw[ok]
        pending = pending[~ok]
    # statistically unreachable: acceptance >= _PLAIN_MIN_MASS per pass
    z[pending] = np.clip(0.0, a[pending], b[pending])


def _exponential_rejection(z, lanes, a, b, rng):
    """Shifted-exponential proposals for [a, inf) or [a, b] with a far in the tail."""
    if lanes.size == 0:
        return
    lam = np.zeros_like(a)
    lam[lanes] = 0.5 * (a[lanes] + np.sqrt(a[lanes] * a[lanes] + 4.0))
    pending = lanes
    for _ in range(_MAX_REJECTION_PASSES):
        if pending.size == 0:
            return
        la = lam[pending]
        draw = a[pending] + rng.exponential(1.0, pending.size) / la
        ok = (draw <= b[pending]) & (np.log(rng.random(pending.size)) <= -0.5 * (draw - la) ** 2)
        z[pending[ok]] = draw[ok]
        pending = pending[~ok]
    z[pending] = a[pending]


def _uniform_rejection(z, lanes, a, b, rng):
    """Uniform proposals scaled by the max density point, for narrow slices."""
    c = np.maximum(a, 0.0)
    pending = lanes
    for _ in range(_MAX_REJECTION_PASSES):
        if pending.size == 0:
            return
        draw = rng.uniform(a[pending], b[pending])
        ok = np.log(rng.random(pending.size)) <= 0.5 * (c[pending] ** 2 - draw**2)
        z[pending[ok]] = draw[ok]
        pending = pending[~ok]
    z[pending] = 0.5 * (a[pending] + b[pending])
