"""Domain types shared by every simulation and verification module.

A simulation is a pure function of ``(SdeProblem, TimeGrid, NoiseSource)``:
grids are uniform, noise streams are counter-based (Philox) so that one
stream per path gives bit-identical output regardless of execution order,
and every sampled trajectory lives in a ``Path`` whose invariants
(non-negativity, monotone reflection term supported on the zero set) are
checked at construction time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterator, Optional

import numpy as np
from numpy.random import Generator, Philox

from .errors import InvalidArgumentError

__all__ = [
    "TimeGrid",
    "CoefficientSpec",
    "Representation",
    "SdeProblem",
    "NoiseSource",
    "Path",
    "make_grid",
    "sample_brownian",
    "noise_streams",
]

_UINT64 = 1 << 64


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid t_k = k * step for k = 0..n_steps."""

    step: float
    n_steps: int

    def __post_init__(self):
        if not (self.step > 0):
            raise InvalidArgumentError(f"step must be positive, got {self.step}")
        if not (self.n_steps >= 1):
            raise InvalidArgumentError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(self.n_steps + 1)

    @property
    def horizon(self) -> float:
        """The last grid time, which may exceed the requested horizon."""
        return self.step * self.n_steps


def make_grid(step: float, horizon: float) -> TimeGrid:
    """Build the coarsest uniform grid with the given step covering ``horizon``.

    The number of steps is the ceiling of horizon/step, so the final grid
    time is at least ``horizon``; callers should read the true horizon back
    from the grid.
    """
    if not (step > 0) or not (horizon > 0):
        raise InvalidArgumentError(
            f"step and horizon must be positive, got step={step}, horizon={horizon}"
        )
    n = math.ceil(horizon / step)
    # Guard against float round-off in the quotient pushing ceil one too far.
    if n > 1 and (n - 1) * step >= horizon:
        n -= 1
    if n * step < horizon:
        n += 1
    return TimeGrid(step=step, n_steps=n)


class Representation(Enum):
    """Integral form in which the zero-boundary behaviour is expressed."""

    DRIFT_INTEGRAL = "drift_integral"
    REFLECTED = "reflected"
    PRINCIPAL_VALUE = "principal_value"
    PURE_DIFFUSION = "pure_diffusion"


@dataclass(frozen=True)
class CoefficientSpec:
    """Drift/diffusion pair (a, sigma) on (0, infinity).

    Use the constructors ``bessel_drift``, ``power_diffusion``,
    ``unit_diffusion`` or ``custom``; the ``kind`` tag records which family
    the pair belongs to so schemes can dispatch on it.
    """

    kind: str
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    beta: Optional[float] = None
    alpha: Optional[float] = None

    @staticmethod
    def bessel_drift(beta: float) -> "CoefficientSpec":
        """a(x) = (beta - 1) / (2 x), sigma = 1, for beta > 0."""
        if not (beta > 0):
            raise InvalidArgumentError(f"beta must be positive, got {beta}")
        half = 0.5 * (beta - 1.0)

        def drift(x):
            return half / np.asarray(x, dtype=float)

        def diffusion(x):
            return np.ones_like(np.asarray(x, dtype=float))

        return CoefficientSpec("bessel_drift", drift, diffusion, beta=beta)

    @staticmethod
    def power_diffusion(alpha: float) -> "CoefficientSpec":
        """a = 0, sigma(x) = x**alpha, for alpha in (0, 1/2)."""
        if not (0.0 < alpha < 0.5):
            raise InvalidArgumentError(f"alpha must lie in (0, 1/2), got {alpha}")

        def drift(x):
            return np.zeros_like(np.asarray(x, dtype=float))

        def diffusion(x):
            return np.abs(np.asarray(x, dtype=float)) ** alpha

        return CoefficientSpec("power_diffusion", drift, diffusion, alpha=alpha)

    @staticmethod
    def unit_diffusion() -> "CoefficientSpec":
        """a = 0, sigma = 1 (reflected Brownian motion when paired with Eq-2)."""

        def drift(x):
            return np.zeros_like(np.asarray(x, dtype=float))

        def diffusion(x):
            return np.ones_like(np.asarray(x, dtype=float))

        return CoefficientSpec("unit_diffusion", drift, diffusion)

    @staticmethod
    def custom(drift: Callable, diffusion: Callable) -> "CoefficientSpec":
        """Caller-supplied pair; the caller asserts local Lipschitz continuity
        on (0, infinity), which ``check_locally_lipschitz`` can probe."""
        return CoefficientSpec("custom", drift, diffusion)

    def check_locally_lipschitz(self, eps: float = 1e-2, n_points: int = 2000,
                                bound: float = 1e8) -> bool:
        """Probe difference quotients of a and sigma on [eps, 1/eps].

        Returns True when all sampled quotients stay below ``bound``; this is
        a numerical sanity check, not a proof.
        """
        if not (0 < eps < 1):
            raise InvalidArgumentError("eps must lie in (0, 1)")
        xs = np.geomspace(eps, 1.0 / eps, n_points)
        for f in (self.drift, self.diffusion):
            vals = np.asarray(f(xs), dtype=float)
            quot = np.abs(np.diff(vals)) / np.diff(xs)
            if not np.all(np.isfinite(quot)) or np.max(quot) > bound:
                return False
        return True

    def check_nonvanishing_sigma(self, eps: float = 1e-3, n_points: int = 2000) -> bool:
        """Sample sigma on [eps, 1/eps] and verify it never vanishes."""
        xs = np.geomspace(eps, 1.0 / eps, n_points)
        vals = np.asarray(self.diffusion(xs), dtype=float)
        return bool(np.all(np.abs(vals) > 0))


@dataclass(frozen=True)
class SdeProblem:
    """Start point, coefficient pair and integral representation."""

    x0: float
    coefficients: CoefficientSpec
    representation: Representation

    def __post_init__(self):
        if not (self.x0 >= 0):
            raise InvalidArgumentError(f"x0 must be nonnegative, got {self.x0}")


@dataclass(frozen=True)
class NoiseSource:
    """Counter-based noise stream, one per path.

    Identical ``(seed, stream_index)`` pairs give bit-identical draws no
    matter how many other streams ran before or concurrently: each call to
    ``generator()`` builds a fresh Philox generator keyed on the pair.
    """

    seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not (0 <= self.seed < _UINT64):
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")
        if not (self.stream_index >= 0):
            raise InvalidArgumentError("stream_index must be nonnegative")

    def generator(self) -> Generator:
        # 128-bit Philox key: low word = seed, high word = stream index.
        return Generator(Philox(key=self.seed + (self.stream_index << 64)))

    def substream(self, offset: int) -> "NoiseSource":
        return NoiseSource(self.seed, self.stream_index + offset)


def noise_streams(seed: int, n: int, base_stream: int = 0) -> Iterator[NoiseSource]:
    """Yield n independent per-path noise sources sharing one seed."""
    for i in range(n):
        yield NoiseSource(seed, base_stream + i)


def sample_brownian(grid: TimeGrid, noise: NoiseSource) -> np.ndarray:
    """Brownian increments over each grid step: n_steps draws of N(0, step)."""
    gen = noise.generator()
    return gen.standard_normal(grid.n_steps) * math.sqrt(grid.step)


@dataclass(frozen=True)
class Path:
    """A sampled trajectory with values in [0, infinity).

    ``reflection_term``, when present, is the accumulated boundary push
    l(t): nondecreasing, zero at t=0, and increasing from step k to k+1
    only when the path sits at 0 at step k+1.
    """

    grid: TimeGrid
    values: np.ndarray
    reflection_term: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (self.grid.n_steps + 1,):
            raise InvalidArgumentError(
                f"values must have length n_steps+1={self.grid.n_steps + 1}, "
                f"got {values.shape}"
            )
        if not np.all(values >= 0):
            raise InvalidArgumentError("path values must be nonnegative")
        if self.reflection_term is not None:
            refl = np.asarray(self.reflection_term, dtype=float)
            object.__setattr__(self, "reflection_term", refl)
            if refl.shape != values.shape:
                raise InvalidArgumentError("reflection_term length mismatch")
            if refl[0] != 0.0:
                raise InvalidArgumentError("reflection_term must start at 0")
            increments = np.diff(refl)
            if np.any(increments < 0):
                raise InvalidArgumentError("reflection_term must be nondecreasing")
            grows = increments > 0
            if np.any(grows & (values[1:] > 0)):
                raise InvalidArgumentError(
                    "reflection_term may only increase while the path is at 0"
                )

    @property
    def horizon(self) -> float:
        return self.grid.horizon

    def value_at_time(self, t: float) -> float:
        """Value at the grid time nearest to t (t must be on the grid)."""
        k = int(round(t / self.grid.step))
        if not (0 <= k <= self.grid.n_steps) or abs(k * self.grid.step - t) > 1e-9 * max(1.0, abs(t)):
            raise InvalidArgumentError(f"t={t} is not a grid time")
        return float(self.values[k])
