"""Smooth test functions that are constant near 0, and residual checkers.

Every smooth profile here is built from one numerically tabulated kernel:
the compactly supported mollifier psi on (0, 2), its CDF, and the CDF's
antiderivative, tabulated once by panel quadrature and interpolated with
cubic splines.  Ramps, identity-above-a-level functions and compact bumps
are scaled/translated compositions of that kernel, so validating the kernel
validates the whole family.

The residual checkers mirror Ito integration with left-endpoint sums.
Coefficients are evaluated at max(x, flat_radius/2): below the flat radius
the derivatives vanish, so the clamped value never influences a correctly
flat test function, while keeping singular coefficients finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .core import CoefficientSpec, Path
from .errors import InsufficientSampleError, InvalidArgumentError

__all__ = [
    "TestFunction",
    "mollifier",
    "mollifier_derivative",
    "smooth_ramp",
    "eta_delta",
    "zeta_delta",
    "bump_family",
    "constant_test_function",
    "ito_residual",
    "martingale_increment_stat",
    "martingale_conditional_stats",
    "increment_samples",
]


def _raw_bump(x: np.ndarray) -> np.ndarray:
    """exp(1/((x-1)^2 - 1)) on (0, 2), zero elsewhere (unnormalised)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > 0.0) & (x < 2.0)
    u = x[inside] - 1.0
    out[inside] = np.exp(1.0 / (u * u - 1.0))
    return out


def _build_kernel_tables(n_nodes: int = 10001):
    """Tabulate the mollifier CDF and its antiderivative on [0, 2]."""
    nodes = np.linspace(0.0, 2.0, n_nodes)
    # Panel Gauss-Legendre of the raw bump for the normaliser and the CDF.
    gl_x, gl_w = np.polynomial.legendre.leggauss(10)
    lo = nodes[:-1]
    width = nodes[1] - nodes[0]
    pts = lo[:, None] + 0.5 * width * (gl_x[None, :] + 1.0)
    vals = _raw_bump(pts.ravel()).reshape(pts.shape)
    panels = 0.5 * width * (vals @ gl_w)
    raw_cdf = np.concatenate(([0.0], np.cumsum(panels)))
    normaliser = raw_cdf[-1]
    cdf_vals = raw_cdf / normaliser
    cdf_spline = CubicSpline(nodes, cdf_vals)
    cdf_antideriv = cdf_spline.antiderivative()
    return 1.0 / normaliser, cdf_spline, cdf_antideriv, float(cdf_antideriv(2.0))


_MOLLIFIER_NORM, _CDF_SPLINE, _CDF_ANTIDERIV, _CDF_AREA = _build_kernel_tables()


def mollifier(x) -> np.ndarray:
    """The unit-mass bump psi supported on (0, 2)."""
    return _MOLLIFIER_NORM * _raw_bump(x)


def mollifier_derivative(x) -> np.ndarray:
    """psi'(x), in closed form from the bump's defining exponent."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > 0.0) & (x < 2.0)
    u = x[inside] - 1.0
    d = u * u - 1.0
    out[inside] = _MOLLIFIER_NORM * np.exp(1.0 / d) * (-2.0 * u / (d * d))
    return out


def _ramp_cdf(v) -> np.ndarray:
    """CDF of psi: 0 below 0, 1 above 2."""
    v = np.asarray(v, dtype=float)
    return np.where(v <= 0.0, 0.0, np.where(v >= 2.0, 1.0, _CDF_SPLINE(np.clip(v, 0.0, 2.0))))


def _ramp_cdf_integral(v) -> np.ndarray:
    """Antiderivative of the CDF: 0 below 0, linear with slope 1 above 2."""
    v = np.asarray(v, dtype=float)
    mid = _CDF_ANTIDERIV(np.clip(v, 0.0, 2.0))
    return np.where(v <= 0.0, 0.0, np.where(v >= 2.0, _CDF_AREA + (v - 2.0), mid))


def smooth_ramp(n: int, x) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The twice differentiable ramp u_n and its first two derivatives.

    u_n'' (x) = n psi(n x); u_n' rises from 0 to exactly 1 across [0, 2/n];
    u_n(x) = x - 1/n beyond 2/n (the mollifier has unit mean).
    """
    if not (n >= 1):
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    x = np.asarray(x, dtype=float)
    v = n * x
    u = _ramp_cdf_integral(v) / n
    du = _ramp_cdf(v)
    d2u = n * mollifier(v)
    return u, du, d2u


def zeta_delta(delta: float, x) -> np.ndarray:
    """The clamp x v delta."""
    if not (delta > 0):
        raise InvalidArgumentError(f"delta must be positive, got {delta}")
    return np.maximum(np.asarray(x, dtype=float), delta)


@dataclass(frozen=True)
class TestFunction:
    """A C^2 function on [0, inf) that is constant on [0, flat_radius].

    ``support_bound`` marks where the function becomes constant again
    (None for unbounded, identity-like tails, which must only be used
    with localisation in mind).
    """

    __test__ = False  # keep pytest from collecting the class by its name

    name: str
    flat_radius: float
    f: Callable
    df: Callable
    d2f: Callable
    support_bound: Optional[float] = None
    unbounded_tail: bool = False

    def check_invariants(self, n_points: int = 64) -> None:
        """Verify flatness below the flat radius and C^2 coherence."""
        r = self.flat_radius
        if math.isfinite(r) and r > 0:
            xs = np.linspace(0.0, r, n_points)
            if np.max(np.abs(self.df(xs))) > 1e-12 or np.max(np.abs(self.d2f(xs))) > 1e-12:
                raise InvalidArgumentError(
                    f"{self.name}: derivatives do not vanish on [0, flat_radius]"
                )
        top = self.support_bound if self.support_bound is not None else 5.0 * max(r, 1.0)
        if not math.isfinite(top):
            top = 5.0
        xs = np.linspace(0.0, 1.2 * top, 301)
        step = xs[1] - xs[0]
        d2 = self.d2f(xs)
        fd = (self.df(xs + 1e-6) - self.df(xs - 1e-6)) / 2e-6
        scale = max(float(np.max(np.abs(d2))), 1.0)
        if np.max(np.abs(fd - d2)) > 1e-3 * scale:
            raise InvalidArgumentError(f"{self.name}: f'' is not the derivative of f'")
        if np.max(np.abs(np.diff(d2))) > 10.0 * scale * step / max(min(r, 1.0), step):
            raise InvalidArgumentError(f"{self.name}: f'' modulus of continuity too rough")


def eta_delta(delta: float) -> TestFunction:
    """Nondecreasing C^2 function equal to x on [delta/2, inf), constant on
    [0, delta/4]."""
    if not (delta > 0):
        raise InvalidArgumentError(f"delta must be positive, got {delta}")
    n = 8.0 / delta
    shift = 0.25 * delta
    # Constant chosen so the linear tail is exactly the identity.
    offset = shift + (2.0 - _CDF_AREA) / n

    def f(x):
        u, _, _ = smooth_ramp(n, np.asarray(x, dtype=float) - shift)
        return u + offset

    def df(x):
        _, du, _ = smooth_ramp(n, np.asarray(x, dtype=float) - shift)
        return du

    def d2f(x):
        _, _, d2u = smooth_ramp(n, np.asarray(x, dtype=float) - shift)
        return d2u

    fn = TestFunction(name=f"eta(delta={delta:g})", flat_radius=shift,
                      f=f, df=df, d2f=d2f, support_bound=None, unbounded_tail=True)
    fn.check_invariants()
    return fn


def _single_bump(flat_radius: float) -> TestFunction:
    m = 2.0 / (3.0 * flat_radius)

    def f(x):
        return _ramp_cdf(m * (np.asarray(x, dtype=float) - flat_radius))

    def df(x):
        return m * mollifier(m * (np.asarray(x, dtype=float) - flat_radius))

    def d2f(x):
        return m * m * mollifier_derivative(m * (np.asarray(x, dtype=float) - flat_radius))

    return TestFunction(name=f"bump(flat={flat_radius:g})", flat_radius=flat_radius,
                        f=f, df=df, d2f=d2f, support_bound=4.0 * flat_radius)


def bump_family(flat_radii: Sequence[float]) -> List[TestFunction]:
    """One compact bump per radius: flat on [0, r], rising on [r, 3r],
    constant past 4r."""
    radii = [float(r) for r in flat_radii]
    if not radii or any(r <= 0 for r in radii):
        raise InvalidArgumentError("flat radii must be positive")
    fns = [_single_bump(r) for r in radii]
    for fn in fns:
        fn.check_invariants()
    return fns


def constant_test_function(value: float = 1.0) -> TestFunction:
    """The degenerate member: every residual built from it vanishes."""

    def f(x):
        return np.full_like(np.asarray(x, dtype=float), value)

    def zero(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    return TestFunction(name="constant", flat_radius=math.inf, f=f, df=zero, d2f=zero,
                        support_bound=None)


def _coefficient_floor(fn: TestFunction) -> float:
    r = fn.flat_radius
    if math.isfinite(r) and r > 0:
        return 0.5 * r
    return 1.0


def ito_residual(path: Path, increments: np.ndarray, fn: TestFunction,
                 coefficients: CoefficientSpec) -> float:
    """Max deviation of f(x) from its discrete Ito expansion along the path.

    Uses the very increments that drove the path; for a scheme whose update
    is the discrete equation itself the residual is zero to rounding.
    """
    increments = np.asarray(increments, dtype=float)
    if increments.shape != (path.grid.n_steps,):
        raise InvalidArgumentError("increments length must equal n_steps")
    h = path.grid.step
    x = path.values
    left = x[:-1]
    floor = _coefficient_floor(fn)
    xe = np.maximum(left, floor)
    a = coefficients.drift(xe)
    sig = coefficients.diffusion(xe)
    df = fn.df(left)
    d2f = fn.d2f(left)
    drift_part = np.concatenate(([0.0], np.cumsum((a * df + 0.5 * sig * sig * d2f) * h)))
    noise_part = np.concatenate(([0.0], np.cumsum(sig * df * increments)))
    expansion = fn.f(x[0]) + drift_part + noise_part
    return float(np.max(np.abs(fn.f(x) - expansion)))


def _grid_index(path_or_grid, t: float) -> int:
    grid = path_or_grid.grid if isinstance(path_or_grid, Path) else path_or_grid
    k = int(round(t / grid.step))
    if not (0 <= k <= grid.n_steps) or abs(k * grid.step - t) > 1e-9 * max(1.0, abs(t)):
        raise InvalidArgumentError(f"t={t} is not a grid time")
    return k


def increment_samples(values: np.ndarray, grid, fn: TestFunction,
                      coefficients: CoefficientSpec, s: float, t: float
                      ) -> Tuple[np.ndarray, np.ndarray]:
    """Per-path martingale increments Y_f(t) - Y_f(s) from a value matrix.

    Returns (increments, values at s).  ``values`` has one row per path.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    ks = _grid_index(grid, s)
    kt = _grid_index(grid, t)
    if not (ks < kt):
        raise InvalidArgumentError("need s < t")
    h = grid.step
    window = values[:, ks:kt]
    floor = _coefficient_floor(fn)
    xe = np.maximum(window, floor)
    integrand = (coefficients.drift(xe) * fn.df(window)
                 + 0.5 * coefficients.diffusion(xe) ** 2 * fn.d2f(window))
    integral = h * np.sum(integrand, axis=1)
    inc = fn.f(values[:, kt]) - fn.f(values[:, ks]) - integral
    return inc, values[:, ks]


def _collect_increments(ensemble: Iterable[Path], fn: TestFunction,
                        coefficients: CoefficientSpec, s: float, t: float,
                        chunk: int = 512) -> Tuple[np.ndarray, np.ndarray]:
    incs: List[np.ndarray] = []
    starts: List[np.ndarray] = []
    rows: List[np.ndarray] = []
    grid = None
    for path in ensemble:
        if grid is None:
            grid = path.grid
        rows.append(path.values)
        if len(rows) == chunk:
            inc, xs = increment_samples(np.stack(rows), grid, fn, coefficients, s, t)
            incs.append(inc)
            starts.append(xs)
            rows = []
    if rows:
        inc, xs = increment_samples(np.stack(rows), grid, fn, coefficients, s, t)
        incs.append(inc)
        starts.append(xs)
    if not incs:
        raise InvalidArgumentError("ensemble is empty")
    return np.concatenate(incs), np.concatenate(starts)


def _standardized_mean(inc: np.ndarray) -> float:
    n = inc.size
    if n < 30:
        raise InsufficientSampleError(f"need at least 30 paths, got {n}")
    sd = float(np.std(inc, ddof=1))
    mean = float(np.mean(inc))
    if sd == 0.0:
        return 0.0
    return mean / (sd / math.sqrt(n))


def martingale_increment_stat(ensemble: Iterable[Path], fn: TestFunction,
                              coefficients: CoefficientSpec, s: float, t: float) -> float:
    """Standardised ensemble mean of Y_f(t) - Y_f(s).

    Near zero when the increments are centred, as the martingale property
    demands; a degenerate (constant-f) ensemble is guarded to 0.
    """
    inc, _ = _collect_increments(ensemble, fn, coefficients, s, t)
    return _standardized_mean(inc)


def martingale_conditional_stats(ensemble: Iterable[Path], fn: TestFunction,
                                 coefficients: CoefficientSpec, s: float, t: float
                                 ) -> Tuple[float, float]:
    """Standardised correlations of the increment with x(s) and x(s)^2.

    Under the martingale null both are asymptotically standard normal, so
    they probe the conditional-mean version of the property.
    """
    inc, xs = _collect_increments(ensemble, fn, coefficients, s, t)
    n = inc.size
    if n < 30:
        raise InsufficientSampleError(f"need at least 30 paths, got {n}")
    out = []
    for g in (xs, xs * xs):
        if np.std(inc) == 0.0 or np.std(g) == 0.0:
            out.append(0.0)
        else:
            r = float(np.corrcoef(inc, g)[0, 1])
            out.append(r * math.sqrt(n))
    return out[0], out[1]
