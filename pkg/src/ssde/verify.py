"""Uniqueness experiments: refinement gaps, max-solution closure, law agreement.

Two discrete solutions can share one Brownian path by aggregating fine-grid
increments into coarse ones (each coarse increment is the exact sum of its
two fine halves, which is asserted bitwise).  "Two solutions" of the same
problem are realised as two admissible regularizations driven by shared
noise, and the closure experiment checks that their pointwise maximum still
passes the martingale test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import NoiseSource, Representation, SdeProblem, make_grid
from .errors import InsufficientSampleError, InvalidArgumentError
from .schemes import (
    _power_floor,
    _power_update,
    _reflected_update,
    _regularized_update,
    bessel_exact_marginal,
    euler_reflected_marginal,
    euler_regularized_marginal,
    power_diffusion_marginal,
)
from .stats import ks_two_sample
from .testfn import TestFunction, increment_samples

__all__ = [
    "pathwise_uniqueness_gap",
    "max_solution_residual",
    "MaxSolutionReport",
    "weak_law_distance",
]


def _aggregate(increments: np.ndarray) -> np.ndarray:
    """Coarse increments as exact pairwise sums of fine ones."""
    if increments.size % 2 != 0:
        raise InvalidArgumentError("cannot aggregate an odd number of increments")
    pair = increments.reshape(-1, 2)
    coarse = pair[:, 0] + pair[:, 1]
    # Bitwise identity with the reshaped sum is the coupling contract.
    assert np.array_equal(coarse, pair.sum(axis=1))
    return coarse


def _block_update(scheme: str, x, l, coeffs, h: float, dw, floor: float, k: int):
    if scheme == "regularized":
        return _regularized_update(x, coeffs, h, dw, floor, k), l
    if scheme == "reflected":
        return _reflected_update(x, l, coeffs, h, dw, floor, k)
    raise InvalidArgumentError(f"unknown scheme tag {scheme!r}")


def pathwise_uniqueness_gap(problem: SdeProblem, scheme: str, noise: NoiseSource,
                            h_sequence: Sequence[float], horizon: float = 1.0,
                            n_paths: int = 256,
                            delta: Optional[float] = None) -> List[float]:
    """Median sup-gap between each step size and its dyadic refinement.

    Each consecutive pair (h, h') must satisfy h' = h (gap is exactly zero
    by determinism) or h' = h/2 (refinement gap with shared, aggregated
    Brownian increments).  Returns one median gap per consecutive pair.
    """
    hs = [float(h) for h in h_sequence]
    if len(hs) < 2:
        raise InvalidArgumentError("h_sequence needs at least two entries")
    for a, b in zip(hs, hs[1:]):
        if not (math.isclose(b, a) or math.isclose(b, 0.5 * a)):
            raise InvalidArgumentError(
                f"h_sequence must halve (or repeat) at each step, got {a} -> {b}"
            )
    coeffs = problem.coefficients
    gaps: List[float] = []
    for a, b in zip(hs, hs[1:]):
        coarse_grid = make_grid(a, horizon)
        n_coarse = coarse_grid.n_steps
        same = math.isclose(b, a)
        fine_inc = np.empty((n_paths, n_coarse if same else 2 * n_coarse))
        for i in range(n_paths):
            gen = noise.substream(i).generator()
            fine_inc[i] = gen.standard_normal(fine_inc.shape[1]) * math.sqrt(b)
        if same:
            coarse_inc = fine_inc
            fine_h = a
        else:
            coarse_inc = np.stack([_aggregate(row) for row in fine_inc])
            fine_h = b
        floor_c = math.sqrt(a) if delta is None else delta
        floor_f = math.sqrt(fine_h) if delta is None else delta
        xc = np.full(n_paths, float(problem.x0))
        xf = np.full(n_paths, float(problem.x0))
        lc = np.zeros(n_paths)
        lf = np.zeros(n_paths)
        sup_gap = np.zeros(n_paths)
        for k in range(n_coarse):
            if same:
                xf, lf = _block_update(scheme, xf, lf, coeffs, fine_h,
                                       fine_inc[:, k], floor_f, k)
            else:
                xf, lf = _block_update(scheme, xf, lf, coeffs, fine_h,
                                       fine_inc[:, 2 * k], floor_f, 2 * k)
                xf, lf = _block_update(scheme, xf, lf, coeffs, fine_h,
                                       fine_inc[:, 2 * k + 1], floor_f, 2 * k + 1)
            xc, lc = _block_update(scheme, xc, lc, coeffs, a,
                                   coarse_inc[:, k], floor_c, k)
            np.maximum(sup_gap, np.abs(xc - xf), out=sup_gap)
        gaps.append(float(np.median(sup_gap)))
    return gaps


@dataclass(frozen=True)
class MaxSolutionReport:
    """Martingale statistics of the pointwise-max ensemble plus the
    class-membership check."""

    stats: Dict[str, float]
    max_abs_stat: float
    zero_time_mean: float
    flagged: bool


def max_solution_residual(problem: SdeProblem, noise: NoiseSource, perturbation: float,
                          family: Sequence[TestFunction], n_paths: int = 10_000,
                          step: float = 1e-3, s: float = 0.25, t: float = 1.0,
                          variant_pair: Optional[Tuple[str, str]] = None,
                          zero_eta: float = 1e-2, zero_tolerance: float = 0.1,
                          block_size: int = 512) -> MaxSolutionReport:
    """Martingale test on the pointwise max of two shared-noise solutions.

    For drift representations the two solutions use regularization levels
    ``perturbation`` and ``perturbation/2``; for the pure-diffusion
    representation ``variant_pair`` selects the two power-scheme variants.
    The max ensemble is also screened with the zero-time-at-0 test, and the
    report is flagged when it fails, since the closure statement only holds
    inside the class of solutions spending zero time at 0.
    """
    if n_paths < 30:
        raise InsufficientSampleError(f"need at least 30 paths, got {n_paths}")
    grid = make_grid(step, t)
    h = grid.step
    coeffs = problem.coefficients
    power = problem.representation is Representation.PURE_DIFFUSION
    if power:
        if variant_pair is None:
            variant_pair = ("sticky_free", "sticky_free")
        alpha = coeffs.alpha
        if alpha is None:
            raise InvalidArgumentError("pure-diffusion closure needs power coefficients")
        floor = _power_floor(alpha, h)
    elif not (perturbation > 0):
        raise InvalidArgumentError(f"perturbation must be positive, got {perturbation}")

    sums: Dict[str, list] = {fn.name: [] for fn in family}
    zero_fracs: List[float] = []
    done = 0
    sqrt_h = math.sqrt(h)
    while done < n_paths:
        b = min(block_size, n_paths - done)
        dw = np.empty((b, grid.n_steps))
        for i in range(b):
            gen = noise.substream(done + i).generator()
            dw[i] = gen.standard_normal(grid.n_steps) * sqrt_h
        x1 = np.full(b, float(problem.x0))
        x2 = np.full(b, float(problem.x0))
        values = np.empty((b, grid.n_steps + 1))
        values[:, 0] = problem.x0
        for k in range(grid.n_steps):
            col = dw[:, k]
            if power:
                x1 = _power_update(x1, alpha, col, variant_pair[0], floor)
                x2 = _power_update(x2, alpha, col, variant_pair[1], floor)
            else:
                x1 = _regularized_update(x1, coeffs, h, col, perturbation, k)
                x2 = _regularized_update(x2, coeffs, h, col, 0.5 * perturbation, k)
            values[:, k + 1] = np.maximum(x1, x2)
        for fn in family:
            inc, _ = increment_samples(values, grid, fn, coeffs, s, t)
            sums[fn.name].append(inc)
        below = values[:, :-1] < zero_eta
        zero_fracs.append(np.mean(below, axis=1))
        done += b

    stats = {}
    for name, chunks in sums.items():
        inc = np.concatenate(chunks)
        sd = float(np.std(inc, ddof=1))
        stats[name] = 0.0 if sd == 0.0 else float(
            np.mean(inc) / (sd / math.sqrt(inc.size)))
    zero_mean = float(np.mean(np.concatenate(zero_fracs)))
    return MaxSolutionReport(
        stats=stats,
        max_abs_stat=max(abs(z) for z in stats.values()) if stats else 0.0,
        zero_time_mean=zero_mean,
        flagged=zero_mean > zero_tolerance,
    )


_MARGINAL_SCHEMES = ("exact", "regularized", "reflected", "power_sticky", "power_absorbed")


def _marginal(problem: SdeProblem, scheme: str, t: float, n_paths: int,
              noise: NoiseSource, step: float, delta: Optional[float]) -> np.ndarray:
    coeffs = problem.coefficients
    if scheme == "exact":
        if coeffs.beta is None:
            raise InvalidArgumentError("exact sampling needs Bessel coefficients")
        return bessel_exact_marginal(coeffs.beta, problem.x0, t, n_paths, noise,
                                     n_steps=4)
    grid = make_grid(step, t)
    if scheme == "regularized":
        d = math.sqrt(step) if delta is None else delta
        return euler_regularized_marginal(problem, grid, noise, n_paths, d)
    if scheme == "reflected":
        return euler_reflected_marginal(problem, grid, noise, n_paths)
    if scheme in ("power_sticky", "power_absorbed"):
        if coeffs.alpha is None:
            raise InvalidArgumentError("power schemes need power coefficients")
        variant = "sticky_free" if scheme == "power_sticky" else "absorbed"
        return power_diffusion_marginal(coeffs.alpha, problem.x0, grid, noise,
                                        n_paths, variant)
    raise InvalidArgumentError(f"unknown scheme tag {scheme!r}; "
                               f"expected one of {_MARGINAL_SCHEMES}")


def weak_law_distance(problem: SdeProblem, scheme_a: str, scheme_b: str, t: float,
                      n_paths: int, noise_a: NoiseSource, noise_b: NoiseSource,
                      step: float = 1e-3, delta: Optional[float] = None) -> float:
    """Two-sample KS distance between the schemes' marginals at time t."""
    if n_paths < 1000:
        raise InsufficientSampleError(
            f"need at least 1000 paths per scheme, got {n_paths}"
        )
    a = _marginal(problem, scheme_a, t, n_paths, noise_a, step, delta)
    b = _marginal(problem, scheme_b, t, n_paths, noise_b, step, delta)
    return ks_two_sample(a, b)
