"""Scale function, occupation clocks and the reduction to reflected Brownian motion.

The scale density rho(x) = exp(integral from x to 1 of 2a/sigma^2) is
tabulated by adaptive panel quadrature on a log-spaced node grid and
interpolated in log x; the scale function s integrates rho, choosing its
branch by numerically probing whether rho is integrable at 0.  Scalar and
batch evaluations share one spline, so they are mutually consistent and the
round-trip s_inv(s(x)) = x holds to root-finder tolerance.

The reduction pipeline follows the clamped state through three stages:
space transform y = s(x v delta), occupation clock D removing the time
spent at the clamp, and variance clock A built from kappa^2; the output is
a process whose law should be Brownian motion reflected at s(delta).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline, CubicSpline, PchipInterpolator
from scipy.optimize import brentq

from .core import CoefficientSpec, Path, TimeGrid
from .errors import (
    InvalidArgumentError,
    OutOfClockError,
    ReductionError,
    TransformError,
)

__all__ = [
    "ScaleTransform",
    "ReducedPath",
    "build_scale",
    "clock_D",
    "inverse_clock",
    "reduce_to_reflected",
]

_X_MIN = 1e-9
_X_MAX = 1e6
_N_NODES = 3001
_GL10_NODES, _GL10_WEIGHTS = np.polynomial.legendre.leggauss(10)
_GL20_NODES, _GL20_WEIGHTS = np.polynomial.legendre.leggauss(20)


@dataclass(frozen=True)
class ScaleTransform:
    """Tabulated scale machinery for one coefficient pair."""

    coefficients: CoefficientSpec
    branch_finite: bool
    _log_nodes: np.ndarray = field(repr=False)
    _log_rho_spline: CubicSpline = field(repr=False)
    _s_spline: CubicHermiteSpline = field(repr=False)
    _kappa_spline: PchipInterpolator = field(repr=False)
    _s_range: tuple = field(repr=False)

    def _check_x(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if np.any(x < _X_MIN) or np.any(x > _X_MAX):
            raise InvalidArgumentError(
                f"x outside the tabulated range [{_X_MIN:g}, {_X_MAX:g}]"
            )
        return x

    def rho(self, x: float) -> float:
        """Scale density rho(x) > 0."""
        return float(self.rho_batch(np.array([x]))[0])

    def rho_batch(self, x) -> np.ndarray:
        x = self._check_x(x)
        return np.exp(self._log_rho_spline(np.log(x)))

    def s(self, x: float) -> float:
        """Strictly increasing scale function."""
        return float(self.s_batch(np.array([x]))[0])

    def s_batch(self, x) -> np.ndarray:
        x = self._check_x(x)
        return self._s_spline(np.log(x))

    def s_inv(self, v: float) -> float:
        """Inverse of s by bracketed root finding on the tabulated spline."""
        lo, hi = self._s_range
        if not (lo <= v <= hi):
            raise InvalidArgumentError(f"v={v} outside the range of s")
        log_root = brentq(lambda u: float(self._s_spline(u)) - v,
                          math.log(_X_MIN), math.log(_X_MAX),
                          xtol=1e-14, rtol=8.9e-16)
        return math.exp(log_root)

    def kappa(self, v: float) -> float:
        """kappa(v) = rho(s_inv(v)) sigma(s_inv(v))."""
        x = self.s_inv(v)
        return float(self.rho(x) * np.asarray(self.coefficients.diffusion(np.array([x])))[0])

    def kappa_batch(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        lo, hi = self._s_range
        if np.any(v < lo) or np.any(v > hi):
            raise InvalidArgumentError("v outside the range of s")
        return self._kappa_spline(v)


def _panel_quad(integrand: Callable, lo: float, hi: float, tol: float) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = quad(integrand, lo, hi, epsabs=tol, epsrel=1e-10, limit=100,
                      full_output=1)
    if len(result) > 3 or not math.isfinite(result[0]):
        raise TransformError(
            f"quadrature of 2a/sigma^2 did not converge on [{lo:g}, {hi:g}]"
        )
    return result[0]


def build_scale(coefficients: CoefficientSpec, quad_tol: float = 1e-10) -> ScaleTransform:
    """Tabulate rho, s, s_inv and kappa for the given coefficient pair.

    The integrability branch of s is decided by comparing rho masses over
    dyadic blocks [2^-k-1, 2^-k]: block ratios staying at or above ~1 as
    k grows mean the integral of rho over (0, 1] diverges.
    """
    if not (quad_tol > 0):
        raise InvalidArgumentError("quad_tol must be positive")

    def log_rho_integrand(y: float) -> float:
        a = float(np.asarray(coefficients.drift(np.array([y])))[0])
        sig = float(np.asarray(coefficients.diffusion(np.array([y])))[0])
        if sig == 0.0:
            raise TransformError(
                f"sigma vanishes at {y}; the scale density integral is undefined"
            )
        return 2.0 * a / (sig * sig)

    log_nodes = np.linspace(math.log(_X_MIN), math.log(_X_MAX), _N_NODES)
    one_idx = int(np.argmin(np.abs(log_nodes)))
    log_nodes[one_idx] = 0.0
    x_nodes = np.exp(log_nodes)

    panels = np.empty(_N_NODES - 1)
    for i in range(_N_NODES - 1):
        try:
            panels[i] = _panel_quad(log_rho_integrand, x_nodes[i], x_nodes[i + 1], quad_tol)
        except TransformError:
            raise
        except Exception as exc:  # pragma: no cover - quad failures are rare
            raise TransformError(
                f"quadrature of 2a/sigma^2 failed on [{x_nodes[i]:g}, {x_nodes[i+1]:g}]: {exc}"
            ) from exc

    # G(x) = integral from x to 1 of 2a/sigma^2; positive cumulations below 1.
    g_nodes = np.zeros(_N_NODES)
    g_nodes[:one_idx] = np.cumsum(panels[:one_idx][::-1])[::-1]
    g_nodes[one_idx + 1:] = -np.cumsum(panels[one_idx:])
    log_rho_spline = CubicSpline(log_nodes, g_nodes)

    rho_nodes = np.exp(g_nodes)

    def rho_extended(x: np.ndarray) -> np.ndarray:
        # Linear log-log extension below the node range for branch probing.
        x = np.asarray(x, dtype=float)
        lx = np.log(x)
        slope = (g_nodes[1] - g_nodes[0]) / (log_nodes[1] - log_nodes[0])
        below = lx < log_nodes[0]
        out = np.empty_like(x)
        out[~below] = np.exp(log_rho_spline(lx[~below]))
        out[below] = np.exp(g_nodes[0] + slope * (lx[below] - log_nodes[0]))
        return out

    ratios = []
    prev = None
    for k in range(41):
        lo, hi = 2.0 ** (-k - 1), 2.0 ** (-k)
        mid = 0.5 * (hi + lo)
        half = 0.5 * (hi - lo)
        mass = half * float(np.sum(_GL20_WEIGHTS * rho_extended(mid + half * _GL20_NODES)))
        if prev is not None and prev > 0:
            ratios.append(mass / prev)
        prev = mass
    tail_ratios = np.array(ratios[-15:])
    branch_finite = bool(np.median(tail_ratios) < 0.98)

    # Panel integrals of rho between consecutive nodes (vectorised GL-10).
    lo = x_nodes[:-1]
    hi = x_nodes[1:]
    mid = 0.5 * (hi + lo)
    half = 0.5 * (hi - lo)
    pts = mid[:, None] + half[:, None] * _GL10_NODES[None, :]
    lp = log_rho_spline(np.log(pts.ravel())).reshape(pts.shape)
    rho_panels = half * (np.exp(lp) @ _GL10_WEIGHTS)

    if branch_finite:
        slope = (g_nodes[1] - g_nodes[0]) / (log_nodes[1] - log_nodes[0])
        if slope <= -0.999:
            raise TransformError(
                "finite branch detected but rho is not integrable at the lowest nodes"
            )
        tail = rho_nodes[0] * x_nodes[0] / (slope + 1.0)
        s_nodes = tail + np.concatenate(([0.0], np.cumsum(rho_panels)))
    else:
        # Accumulate away from the anchor x = 1 in both directions; a single
        # cumulative sum from the divergent end would cancel catastrophically.
        s_nodes = np.zeros(_N_NODES)
        s_nodes[one_idx + 1:] = np.cumsum(rho_panels[one_idx:])
        s_nodes[:one_idx] = -np.cumsum(rho_panels[:one_idx][::-1])[::-1]

    # dS/d(log x) = rho(x) * x, known exactly at the nodes.
    s_spline = CubicHermiteSpline(log_nodes, s_nodes, rho_nodes * x_nodes)

    sigma_nodes = np.asarray(coefficients.diffusion(x_nodes), dtype=float)
    # Where s saturates in float precision (divergent-rho tails), keep only
    # the first node of each tie so the interpolation knots stay increasing.
    keep = np.concatenate(([True], np.diff(s_nodes) > 0))
    kappa_spline = PchipInterpolator(s_nodes[keep], (rho_nodes * sigma_nodes)[keep])

    return ScaleTransform(
        coefficients=coefficients,
        branch_finite=branch_finite,
        _log_nodes=log_nodes,
        _log_rho_spline=log_rho_spline,
        _s_spline=s_spline,
        _kappa_spline=kappa_spline,
        _s_range=(float(s_nodes[0]), float(s_nodes[-1])),
    )


def clock_D(path: Path, delta: float, transform: ScaleTransform) -> np.ndarray:
    """Occupation clock D[k] = h * #{j < k : x_j > delta}.

    The count through the transformed state y = s(x v delta) against
    s(delta) must agree level-by-level with the direct count (s is strictly
    increasing); this equivalence is asserted on every call.
    """
    if not (delta > 0):
        raise InvalidArgumentError(f"delta must be positive, got {delta}")
    v = path.values[:-1]
    above_x = v > delta
    y = transform.s_batch(np.maximum(v, delta))
    above_y = y > transform.s(delta)
    if int(np.count_nonzero(above_x)) != int(np.count_nonzero(above_y)):
        raise TransformError("occupation counts through s disagree with direct counts")
    h = path.grid.step
    return np.concatenate(([0.0], np.cumsum(above_x) * h))


def inverse_clock(D: Sequence[float], t: float, times: Sequence[float]) -> float:
    """Smallest grid time t_k with D[k] > t (right-continuous inverse)."""
    D = np.asarray(D, dtype=float)
    times = np.asarray(times, dtype=float)
    if D.shape != times.shape:
        raise InvalidArgumentError("D and times must have equal length")
    if not (t >= 0):
        raise InvalidArgumentError(f"t must be nonnegative, got {t}")
    if t >= D[-1]:
        raise OutOfClockError(f"t={t} is at or beyond the total clock {D[-1]}")
    idx = int(np.searchsorted(D, t, side="right"))
    return float(times[idx])


@dataclass(frozen=True)
class ReducedPath:
    """Output of the reduction pipeline, sampled on a uniform new-time grid.

    Values live in scale space, so they may be negative when the scale
    function's divergent branch applies; ``delta_level`` is the reflection
    level s(delta).
    """

    grid: TimeGrid
    values: np.ndarray
    delta_level: float
    total_new_time: float


def reduce_to_reflected(path: Path, transform: ScaleTransform, delta: float) -> ReducedPath:
    """Space transform, occupation clock and variance clock, in that order.

    Resolvability: delta should sit well above the scheme resolution
    (delta >= 10 sqrt(h) is a good rule of thumb).
    """
    if not (delta > 0):
        raise InvalidArgumentError(f"delta must be positive, got {delta}")
    h = path.grid.step
    v = path.values
    flagged = np.nonzero(v[:-1] > delta)[0]
    if flagged.size == 0:
        raise ReductionError("the occupation clock never leaves zero")
    # U holds, over new-time intervals of length h, the transformed state
    # right after each flagged step.
    u_values = transform.s_batch(np.maximum(v[flagged + 1], delta))
    kappa_sq = transform.kappa_batch(u_values) ** 2
    a_clock = np.concatenate(([0.0], np.cumsum(kappa_sq * h)))
    new_step = float(np.median(kappa_sq * h))
    if not (new_step > 0):
        raise ReductionError("variance clock is degenerate")
    total = float(a_clock[-1])
    n_out = int(math.floor(a_clock[-2] / new_step)) if a_clock.size > 1 else 0
    if n_out < 1:
        raise ReductionError("variance clock too short to resample")
    new_times = new_step * np.arange(n_out + 1)
    values = np.interp(new_times, a_clock[:-1], u_values)
    return ReducedPath(
        grid=TimeGrid(step=new_step, n_steps=n_out),
        values=values,
        delta_level=transform.s(delta),
        total_new_time=total,
    )
