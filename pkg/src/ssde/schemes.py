"""Path integrators for each integral representation of the boundary behaviour.

Per-path entry points return ``Path`` objects and consume one noise stream
each.  The ensemble helpers are the Monte Carlo workhorses: they advance
whole blocks of paths through vectorised updates.  Euler ensembles keep the
one-stream-per-path contract (each path's increments come from its own
substream); the exact-transition ensemble draws Poisson/gamma variates for
all paths from a single stream per step, which is deterministic for a fixed
``(seed, stream_index, n_paths, grid)`` but is a different (equally exact)
sampler than running the per-path chain n_paths times.
"""

from __future__ import annotations

import math
from typing import Iterator, Optional

import numpy as np

from .bessel_analytic import BesselParams, _transition_step
from .core import NoiseSource, Path, Representation, SdeProblem, TimeGrid, sample_brownian
from .errors import InvalidArgumentError, SchemeError

__all__ = [
    "simulate_euler_reflected",
    "simulate_regularized_drift",
    "simulate_bessel_exact",
    "simulate_power_diffusion",
    "bessel_exact_marginal",
    "bessel_exact_path_blocks",
    "euler_regularized_marginal",
    "euler_regularized_path_blocks",
    "euler_reflected_marginal",
    "power_diffusion_marginal",
    "paths_from_blocks",
]


def _check_finite(arr: np.ndarray, step_index: int, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise SchemeError(f"{what} produced a non-finite value", step_index=step_index)


def _reflected_update(x, l, coeffs, h, dw, floor, k):
    xe = np.maximum(x, floor)
    drift = coeffs.drift(xe)
    diff = coeffs.diffusion(xe)
    _check_finite(drift, k, "drift")
    _check_finite(diff, k, "diffusion")
    prop = x + drift * h + diff * dw
    new = np.maximum(prop, 0.0)
    return new, l + (new - prop)


def _regularized_update(x, coeffs, h, dw, delta, k):
    xe = np.maximum(x, delta)
    drift = coeffs.drift(xe)
    diff = coeffs.diffusion(xe)
    _check_finite(drift, k, "drift")
    _check_finite(diff, k, "diffusion")
    return np.maximum(x + drift * h + diff * dw, 0.0)


def _power_floor(alpha: float, h: float) -> float:
    # Self-similar one-step scale: kicks from 0 reach h**(1/(2(1-alpha)))
    # in one step, matching the escape rate of the zero-time solution.
    return h ** (1.0 / (2.0 * (1.0 - alpha)))


def _power_update(x, alpha, dw, variant, floor):
    if variant == "sticky_free":
        sigma = np.maximum(x, floor) ** alpha
        return np.abs(x + sigma * dw)
    sigma = x ** alpha
    return np.maximum(x + sigma * dw, 0.0)


def simulate_euler_reflected(problem: SdeProblem, grid: TimeGrid, noise: NoiseSource,
                             increments: Optional[np.ndarray] = None,
                             delta_eval: Optional[float] = None) -> Path:
    """Projected Euler scheme with an explicit boundary-push accumulator.

    x_{k+1} = max(0, x_k + a(x_k v floor) h + sigma(x_k v floor) dW_k); the
    clipped amount is recorded in the reflection term, which therefore grows
    only on steps that land exactly at 0.
    """
    if problem.representation is not Representation.REFLECTED:
        raise InvalidArgumentError("problem representation must be REFLECTED")
    h = grid.step
    floor = math.sqrt(h) if delta_eval is None else float(delta_eval)
    dw = sample_brownian(grid, noise) if increments is None else np.asarray(increments, dtype=float)
    if dw.shape != (grid.n_steps,):
        raise InvalidArgumentError("increments length must equal n_steps")
    values = np.empty(grid.n_steps + 1)
    refl = np.empty(grid.n_steps + 1)
    x = np.array([problem.x0])
    l = np.array([0.0])
    values[0] = problem.x0
    refl[0] = 0.0
    coeffs = problem.coefficients
    for k in range(grid.n_steps):
        x, l = _reflected_update(x, l, coeffs, h, dw[k], floor, k)
        values[k + 1] = x[0]
        refl[k + 1] = l[0]
    return Path(grid=grid, values=values, reflection_term=refl)


def simulate_regularized_drift(problem: SdeProblem, grid: TimeGrid, noise: NoiseSource,
                               delta: float,
                               increments: Optional[np.ndarray] = None) -> Path:
    """Euler scheme with coefficients evaluated at x v delta, projected to [0, inf).

    Keeps singular coefficients away from their blow-up point: the drift is
    never sampled below delta.
    """
    if problem.representation not in (Representation.DRIFT_INTEGRAL,
                                      Representation.PRINCIPAL_VALUE):
        raise InvalidArgumentError(
            "problem representation must be DRIFT_INTEGRAL or PRINCIPAL_VALUE"
        )
    if not (delta > 0):
        raise InvalidArgumentError(f"delta must be positive, got {delta}")
    h = grid.step
    dw = sample_brownian(grid, noise) if increments is None else np.asarray(increments, dtype=float)
    if dw.shape != (grid.n_steps,):
        raise InvalidArgumentError("increments length must equal n_steps")
    values = np.empty(grid.n_steps + 1)
    x = np.array([problem.x0])
    values[0] = problem.x0
    coeffs = problem.coefficients
    for k in range(grid.n_steps):
        x = _regularized_update(x, coeffs, h, dw[k], delta, k)
        values[k + 1] = x[0]
    return Path(grid=grid, values=values)


def simulate_bessel_exact(beta: float, x0: float, grid: TimeGrid,
                          noise: NoiseSource) -> Path:
    """Markov chain with exact one-step transitions; marginals are exact."""
    params = BesselParams(beta)
    if not (x0 >= 0):
        raise InvalidArgumentError(f"x0 must be nonnegative, got {x0}")
    gen = noise.generator()
    values = np.empty(grid.n_steps + 1)
    values[0] = x0
    x = np.array([x0])
    for k in range(grid.n_steps):
        x = _transition_step(gen, params, grid.step, x)
        values[k + 1] = x[0]
    return Path(grid=grid, values=values)


def simulate_power_diffusion(alpha: float, x0: float, grid: TimeGrid,
                             noise: NoiseSource, variant: str,
                             increments: Optional[np.ndarray] = None) -> Path:
    """Euler scheme for dx = x^alpha dW in one of two solution classes.

    ``sticky_free`` mirrors the state at 0 and floors the diffusion
    evaluation at the one-step self-similar scale, approximating the
    solution that spends zero time at 0.  ``absorbed`` evaluates the
    diffusion at the state itself, so 0 is a trap: the all-zero trajectory
    also solves the equation, and this variant realises it.
    """
    if not (0.0 < alpha < 0.5):
        raise InvalidArgumentError(f"alpha must lie in (0, 1/2), got {alpha}")
    if variant not in ("sticky_free", "absorbed"):
        raise InvalidArgumentError(f"unknown variant {variant!r}")
    if not (x0 >= 0):
        raise InvalidArgumentError(f"x0 must be nonnegative, got {x0}")
    h = grid.step
    floor = _power_floor(alpha, h)
    dw = sample_brownian(grid, noise) if increments is None else np.asarray(increments, dtype=float)
    if dw.shape != (grid.n_steps,):
        raise InvalidArgumentError("increments length must equal n_steps")
    values = np.empty(grid.n_steps + 1)
    x = np.array([float(x0)])
    values[0] = x0
    for k in range(grid.n_steps):
        x = _power_update(x, alpha, dw[k], variant, floor)
        values[k + 1] = x[0]
    return Path(grid=grid, values=values)


# ---------------------------------------------------------------------------
# Ensemble kernels
# ---------------------------------------------------------------------------


def bessel_exact_marginal(beta: float, x0: float, t: float, n_paths: int,
                          noise: NoiseSource, n_steps: int = 1) -> np.ndarray:
    """n_paths exact draws of the time-t value, chained over n_steps steps."""
    params = BesselParams(beta)
    if not (t > 0) or not (n_steps >= 1):
        raise InvalidArgumentError("t must be positive and n_steps >= 1")
    gen = noise.generator()
    x = np.full(n_paths, float(x0))
    h = t / n_steps
    for _ in range(n_steps):
        x = _transition_step(gen, params, h, x)
    return x


def bessel_exact_path_blocks(beta: float, x0: float, grid: TimeGrid,
                             noise: NoiseSource, n_paths: int,
                             block_size: int = 1024) -> Iterator[np.ndarray]:
    """Yield (block, n_steps+1) matrices of exact-chain trajectories."""
    params = BesselParams(beta)
    gen = noise.generator()
    done = 0
    while done < n_paths:
        b = min(block_size, n_paths - done)
        values = np.empty((b, grid.n_steps + 1))
        values[:, 0] = x0
        x = np.full(b, float(x0))
        for k in range(grid.n_steps):
            x = _transition_step(gen, params, grid.step, x)
            values[:, k + 1] = x
        yield values
        done += b


def _per_path_increments(grid: TimeGrid, noise: NoiseSource, offset: int,
                         count: int) -> np.ndarray:
    out = np.empty((count, grid.n_steps))
    sqrt_h = math.sqrt(grid.step)
    for i in range(count):
        gen = noise.substream(offset + i).generator()
        out[i] = gen.standard_normal(grid.n_steps) * sqrt_h
    return out


def euler_regularized_marginal(problem: SdeProblem, grid: TimeGrid,
                               noise: NoiseSource, n_paths: int, delta: float,
                               block_size: int = 2048) -> np.ndarray:
    """Terminal values of the regularized-drift scheme, one substream per path."""
    if not (delta > 0):
        raise InvalidArgumentError(f"delta must be positive, got {delta}")
    coeffs = problem.coefficients
    h = grid.step
    out = np.empty(n_paths)
    done = 0
    while done < n_paths:
        b = min(block_size, n_paths - done)
        dw = _per_path_increments(grid, noise, done, b)
        x = np.full(b, float(problem.x0))
        for k in range(grid.n_steps):
            x = _regularized_update(x, coeffs, h, dw[:, k], delta, k)
        out[done:done + b] = x
        done += b
    return out


def euler_regularized_path_blocks(problem: SdeProblem, grid: TimeGrid,
                                  noise: NoiseSource, n_paths: int, delta: float,
                                  block_size: int = 256) -> Iterator[np.ndarray]:
    """Yield (block, n_steps+1) matrices of regularized-drift trajectories."""
    if not (delta > 0):
        raise InvalidArgumentError(f"delta must be positive, got {delta}")
    coeffs = problem.coefficients
    h = grid.step
    done = 0
    while done < n_paths:
        b = min(block_size, n_paths - done)
        dw = _per_path_increments(grid, noise, done, b)
        values = np.empty((b, grid.n_steps + 1))
        values[:, 0] = problem.x0
        x = np.full(b, float(problem.x0))
        for k in range(grid.n_steps):
            x = _regularized_update(x, coeffs, h, dw[:, k], delta, k)
            values[:, k + 1] = x
        yield values
        done += b


def euler_reflected_marginal(problem: SdeProblem, grid: TimeGrid,
                             noise: NoiseSource, n_paths: int,
                             delta_eval: Optional[float] = None,
                             block_size: int = 2048) -> np.ndarray:
    """Terminal values of the projected-Euler reflected scheme."""
    coeffs = problem.coefficients
    h = grid.step
    floor = math.sqrt(h) if delta_eval is None else float(delta_eval)
    out = np.empty(n_paths)
    done = 0
    while done < n_paths:
        b = min(block_size, n_paths - done)
        dw = _per_path_increments(grid, noise, done, b)
        x = np.full(b, float(problem.x0))
        l = np.zeros(b)
        for k in range(grid.n_steps):
            x, l = _reflected_update(x, l, coeffs, h, dw[:, k], floor, k)
        out[done:done + b] = x
        done += b
    return out


def power_diffusion_marginal(alpha: float, x0: float, grid: TimeGrid,
                             noise: NoiseSource, n_paths: int, variant: str,
                             block_size: int = 2048) -> np.ndarray:
    """Terminal values of the power-diffusion scheme, one substream per path."""
    if variant not in ("sticky_free", "absorbed"):
        raise InvalidArgumentError(f"unknown variant {variant!r}")
    h = grid.step
    floor = _power_floor(alpha, h)
    out = np.empty(n_paths)
    done = 0
    while done < n_paths:
        b = min(block_size, n_paths - done)
        dw = _per_path_increments(grid, noise, done, b)
        x = np.full(b, float(x0))
        for k in range(grid.n_steps):
            x = _power_update(x, alpha, dw[:, k], variant, floor)
        out[done:done + b] = x
        done += b
    return out


def paths_from_blocks(grid: TimeGrid, blocks: Iterator[np.ndarray]) -> Iterator[Path]:
    """Flatten block matrices into individual Path objects."""
    for block in blocks:
        for row in block:
            yield Path(grid=grid, values=row)
