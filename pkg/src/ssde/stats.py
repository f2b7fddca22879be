"""Goodness-of-fit and Monte Carlo error helpers shared by the checks."""

from __future__ import annotations

from statistics import NormalDist
from typing import Callable, Sequence, Tuple

import numpy as np

from .errors import InsufficientSampleError, InvalidArgumentError

__all__ = [
    "ks_distance",
    "ks_two_sample",
    "ks_null_quantile",
    "mc_mean_ci",
]

_STD_NORMAL = NormalDist()


def ks_distance(samples: Sequence[float], cdf: Callable) -> float:
    """sup_y |F_N(y) - cdf(y)| over the sample points, both one-sided gaps.

    ``cdf`` may be vectorised (preferred) or scalar.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise InvalidArgumentError("samples must be nonempty")
    xs = np.sort(samples)
    try:
        fs = np.asarray(cdf(xs), dtype=float)
        if fs.shape != xs.shape:
            raise TypeError
    except TypeError:
        fs = np.array([float(cdf(v)) for v in xs])
    n = xs.size
    upper = np.arange(1, n + 1) / n - fs
    lower = fs - np.arange(0, n) / n
    return float(max(np.max(upper), np.max(lower)))


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise InvalidArgumentError("samples must be nonempty")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_null_quantile(n: int, level: float = 0.99, m: int | None = None) -> float:
    """Approximate null quantile of the KS distance at the given level.

    One-sample: c(level)/sqrt(n); two-sample with sizes n, m:
    c(level) * sqrt(1/n + 1/m), with c from the asymptotic Kolmogorov law.
    """
    if not (0 < level < 1):
        raise InvalidArgumentError("level must lie in (0, 1)")
    c = float(np.sqrt(-0.5 * np.log((1.0 - level) / 2.0)))
    if m is None:
        return c / float(np.sqrt(n))
    return c * float(np.sqrt(1.0 / n + 1.0 / m))


def mc_mean_ci(samples: Sequence[float], level: float) -> Tuple[float, float]:
    """Sample mean with a normal-approximation confidence half-width."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 30:
        raise InsufficientSampleError(
            f"need at least 30 samples for a normal CI, got {samples.size}"
        )
    if not (0 < level < 1):
        raise InvalidArgumentError("level must lie in (0, 1)")
    z = _STD_NORMAL.inv_cdf(0.5 * (1.0 + level))
    mean = float(np.mean(samples))
    half = float(z * np.std(samples, ddof=1) / np.sqrt(samples.size))
    return mean, half
