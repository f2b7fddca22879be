"""Occupation-based local-time estimators and the identities they satisfy.

Two normalisations of local time appear in the formulas this module checks.
The window estimator

    L_hat(a) = (1/eps) * time spent in [a, a+eps)

estimates occupation density per unit length.  The occupation identity and
the principal-value functional are stated for the diffusion local time
taken relative to the speed density x^(beta-1); the bridge is to divide the
time spent in a window by the speed measure of that window rather than by
its length.  ``occupation_local_time`` returns the plain window estimator;
the identity routines normalise by window speed measure internally, which
makes both identities hold sample-by-sample up to window and level-grid
bias, with no statistical error between their two sides.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .core import Path
from .errors import InvalidArgumentError

__all__ = [
    "LocalTimeEstimate",
    "occupation_local_time",
    "local_time_profile",
    "occupation_identity_residual",
    "principal_value_k",
    "zero_time_fraction",
    "default_level_grid",
]


@dataclass(frozen=True)
class LocalTimeEstimate:
    """Cumulative window-occupancy curve for one level.

    ``values[k]`` is the estimate at grid time ``times[k]``; the curve is
    nondecreasing and starts at zero.
    """

    level: float
    window: float
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        if values[0] != 0.0:
            raise InvalidArgumentError("local-time curve must start at 0")
        if np.any(np.diff(values) < 0):
            raise InvalidArgumentError("local-time curve must be nondecreasing")

    def value_at(self, t: float) -> float:
        k = int(round(t / (self.times[1] - self.times[0])))
        if not (0 <= k < self.times.size):
            raise InvalidArgumentError(f"t={t} outside the estimate's grid")
        return float(self.values[k])

    @property
    def final(self) -> float:
        return float(self.values[-1])


def occupation_local_time(path: Path, level: float, window: float) -> LocalTimeEstimate:
    """One-sided window estimator (1/window) * time in [level, level+window).

    Left-endpoint occupancy: the sample at t_j is counted toward the
    interval [t_j, t_{j+1}), so the curve at t=0 is exactly zero.
    """
    if not (window > 0):
        raise InvalidArgumentError(f"window must be positive, got {window}")
    if not (level >= 0):
        raise InvalidArgumentError(f"level must be nonnegative, got {level}")
    h = path.grid.step
    v = path.values[:-1]
    hits = (v >= level) & (v < level + window)
    curve = np.concatenate(([0.0], np.cumsum(hits) * (h / window)))
    return LocalTimeEstimate(level=level, window=window, times=path.grid.times,
                             values=curve)


def local_time_profile(path: Path, levels: Sequence[float],
                       window: float) -> Dict[float, LocalTimeEstimate]:
    """Window estimates for several levels of the same path."""
    levels = np.asarray(levels, dtype=float)
    if levels.size == 0:
        raise InvalidArgumentError("levels must be nonempty")
    if np.any(levels <= 0) or np.any(np.diff(levels) <= 0):
        raise InvalidArgumentError("levels must be positive and strictly increasing")
    return {float(a): occupation_local_time(path, float(a), window) for a in levels}


def _midpoint_weights(levels: np.ndarray) -> np.ndarray:
    if levels.size == 1:
        return np.array([levels[0]])
    w = np.empty_like(levels)
    w[1:-1] = 0.5 * (levels[2:] - levels[:-2])
    w[0] = levels[1] - levels[0]
    w[-1] = levels[-1] - levels[-2]
    return w


def _window_speed_measure(levels: np.ndarray, window: float, beta: float) -> np.ndarray:
    """Integral of x^(beta-1) over [a, a+window) for each level a."""
    return ((levels + window) ** beta - levels ** beta) / beta


def occupation_identity_residual(path: Path, phi: Callable, beta: float,
                                 levels: Sequence[float], window: float) -> float:
    """|time integral of phi along the path - level integral of the profile|.

    The left side is h * sum phi(x_j); the right side integrates
    phi(a) L_a a^(beta-1) over the levels with the speed-normalised window
    estimate of L_a, using midpoint weights on the level grid.
    """
    if not (window > 0):
        raise InvalidArgumentError(f"window must be positive, got {window}")
    levels = np.asarray(levels, dtype=float)
    if levels.size == 0:
        raise InvalidArgumentError("levels must be nonempty")
    h = path.grid.step
    v = path.values[:-1]
    lhs = h * float(np.sum(phi(v)))

    sorted_v = np.sort(v)
    counts = (np.searchsorted(sorted_v, levels + window, side="left")
              - np.searchsorted(sorted_v, levels, side="left"))
    occupancy = h * counts
    l_speed = occupancy / _window_speed_measure(levels, window, beta)
    weights = _midpoint_weights(levels)
    rhs = float(np.sum(np.asarray(phi(levels), dtype=float)
                       * l_speed * levels ** (beta - 1.0) * weights))
    return abs(lhs - rhs)


def default_level_grid(a_max: float, n_levels: int = 200,
                       floor: float = 1e-4) -> np.ndarray:
    """Geometric level grid on (floor, a_max], densest near the origin."""
    if not (a_max > floor > 0):
        raise InvalidArgumentError("need a_max > floor > 0")
    return np.geomspace(floor, a_max, n_levels)


def principal_value_k(path: Path, beta: float, a_max: float,
                      levels: Optional[Sequence[float]] = None,
                      window: Optional[float] = None) -> np.ndarray:
    """Principal-value drift functional k(t) on the path's grid.

    Discretises integral of a^(beta-2) (L_a(t) - L_0(t)) da over the level
    grid, with both local times speed-normalised over a common window so
    the divergent parts near the origin cancel.  Returns the cumulative
    curve aligned with ``path.grid.times``.
    """
    if not (0.0 < beta < 1.0):
        raise InvalidArgumentError(
            f"principal value functional requires beta in (0,1), got {beta}"
        )
    top = float(np.max(path.values))
    if not (a_max >= top):
        raise InvalidArgumentError(
            f"a_max={a_max} must lie beyond the path range (max value {top})"
        )
    h = path.grid.step
    eps = float(np.sqrt(h)) if window is None else float(window)
    if not (eps > 0):
        raise InvalidArgumentError(f"window must be positive, got {window}")
    if levels is None:
        grid_levels = default_level_grid(a_max)
    else:
        grid_levels = np.asarray(levels, dtype=float)
    if np.any(grid_levels <= 0) or np.any(np.diff(grid_levels) <= 0):
        raise InvalidArgumentError("levels must be positive and strictly increasing")

    # Midpoint cells around the levels.  A sample at v drives the windows of
    # every level in (v - eps, v]; cells sliced by that range are counted
    # fractionally, otherwise the level integral would carry O(cell/window)
    # edge noise wherever the grid is coarse relative to the window.
    a = grid_levels
    bounds = np.empty(a.size + 1)
    if a.size == 1:
        bounds[0], bounds[1] = 0.5 * a[0], 1.5 * a[0]
    else:
        bounds[1:-1] = 0.5 * (a[1:] + a[:-1])
        bounds[0] = max(a[0] - 0.5 * (a[1] - a[0]), 0.0)
        bounds[-1] = a[-1] + 0.5 * (a[-1] - a[-2])
    cell = np.diff(bounds)
    m_window = _window_speed_measure(a, eps, beta)
    coef = a ** (beta - 2.0) * cell / m_window
    prefix = np.concatenate(([0.0], np.cumsum(coef)))
    density = coef / cell

    def level_integral(u: np.ndarray) -> np.ndarray:
        u = np.clip(u, bounds[0], bounds[-1])
        j = np.clip(np.searchsorted(bounds, u, side="right") - 1, 0, a.size - 1)
        return prefix[j] + density[j] * (u - bounds[j])

    # Zero-level estimate shares the window: time in [0, eps) over the
    # speed measure of [0, eps), times the full level integral of a^(beta-2).
    m_zero = eps ** beta / beta
    c_zero = float(np.sum(a ** (beta - 2.0) * cell)) / m_zero

    v = path.values[:-1]
    sample_weight = level_integral(v) - level_integral(v - eps) - c_zero * (v < eps)
    return h * np.concatenate(([0.0], np.cumsum(sample_weight)))


def zero_time_fraction(path: Path, eta: float) -> float:
    """Fraction of grid time the path spends below eta."""
    if not (eta > 0):
        raise InvalidArgumentError(f"eta must be positive, got {eta}")
    v = path.values[:-1]
    return float(np.count_nonzero(v < eta)) / v.size
