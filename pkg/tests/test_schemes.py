import math

import numpy as np
import pytest

from ssde.bessel_analytic import BesselParams, sample_transition, transition_cdf_many
from ssde.core import (
    CoefficientSpec,
    NoiseSource,
    Representation,
    SdeProblem,
    make_grid,
    sample_brownian,
)
from ssde.errors import InvalidArgumentError
from ssde.localtime import zero_time_fraction
from ssde.schemes import (
    bessel_exact_marginal,
    bessel_exact_path_blocks,
    euler_reflected_marginal,
    euler_regularized_marginal,
    paths_from_blocks,
    power_diffusion_marginal,
    simulate_bessel_exact,
    simulate_euler_reflected,
    simulate_power_diffusion,
    simulate_regularized_drift,
)
from ssde.stats import ks_distance, ks_null_quantile, ks_two_sample


def _constant_coeffs(a, sigma):
    return CoefficientSpec.custom(
        lambda x: np.full_like(np.asarray(x, dtype=float), a),
        lambda x: np.full_like(np.asarray(x, dtype=float), sigma),
    )


class TestEulerReflected:
    def test_frozen_coefficients_constant_path(self):
        problem = SdeProblem(x0=5.0, coefficients=_constant_coeffs(0.0, 0.0),
                             representation=Representation.REFLECTED)
        grid = make_grid(0.1, 1.0)
        path = simulate_euler_reflected(problem, grid, NoiseSource(0, 0))
        np.testing.assert_array_equal(path.values, np.full(11, 5.0))
        np.testing.assert_array_equal(path.reflection_term, np.zeros(11))

    def test_pure_pushing(self):
        # a = -1, sigma = 0 from 0: the path stays pinned and l(t) = t.
        problem = SdeProblem(x0=0.0, coefficients=_constant_coeffs(-1.0, 0.0),
                             representation=Representation.REFLECTED)
        grid = make_grid(1e-3, 1.0)
        path = simulate_euler_reflected(problem, grid, NoiseSource(1, 0))
        assert np.max(path.values) == 0.0
        assert path.reflection_term[-1] == pytest.approx(1.0, abs=1e-3 + 1e-12)

    def test_folded_normal_mean(self):
        # Reflected Brownian motion from 0: E x(1) = sqrt(2/pi), with the
        # projected scheme's downward O(sqrt h) boundary bias.
        problem = SdeProblem(x0=0.0, coefficients=CoefficientSpec.unit_diffusion(),
                             representation=Representation.REFLECTED)
        grid = make_grid(1e-3, 1.0)
        vals = euler_reflected_marginal(problem, grid, NoiseSource(9, 0), 100_000)
        se = np.std(vals, ddof=1) / math.sqrt(vals.size)
        bias_band = 0.7 * math.sqrt(grid.step)
        assert abs(np.mean(vals) - math.sqrt(2.0 / math.pi)) < 4.0 * se + bias_band

    def test_representation_enforced(self):
        problem = SdeProblem(x0=1.0, coefficients=CoefficientSpec.unit_diffusion(),
                             representation=Representation.DRIFT_INTEGRAL)
        with pytest.raises(InvalidArgumentError):
            simulate_euler_reflected(problem, make_grid(0.1, 1.0), NoiseSource(0, 0))

    def test_reflection_supported_on_zero_set(self):
        problem = SdeProblem(x0=0.2, coefficients=CoefficientSpec.unit_diffusion(),
                             representation=Representation.REFLECTED)
        grid = make_grid(1e-3, 1.0)
        path = simulate_euler_reflected(problem, grid, NoiseSource(21, 3))
        growth = np.diff(path.reflection_term) > 0
        assert np.any(growth)
        assert np.all(path.values[1:][growth] == 0.0)


class TestRegularizedDrift:
    def test_saturating_clamp_equals_frozen_euler(self):
        # delta above the whole trajectory: every evaluation happens at delta.
        beta = 3.0
        problem = SdeProblem(x0=1.0, coefficients=CoefficientSpec.bessel_drift(beta),
                             representation=Representation.DRIFT_INTEGRAL)
        grid = make_grid(1e-3, 0.5)
        noise = NoiseSource(4, 2)
        delta = 50.0
        inc = sample_brownian(grid, noise)
        path = simulate_regularized_drift(problem, grid, noise, delta, increments=inc)
        a = (beta - 1.0) / (2.0 * delta)
        manual = np.empty(grid.n_steps + 1)
        manual[0] = 1.0
        x = 1.0
        for k in range(grid.n_steps):
            x = max(x + a * grid.step + inc[k], 0.0)
            manual[k + 1] = x
        np.testing.assert_allclose(path.values, manual, rtol=0, atol=0)

    def test_polar_dimension_avoids_origin(self):
        # For beta >= 2 the origin is polar; time below 1e-3 is negligible.
        problem = SdeProblem(x0=1.0, coefficients=CoefficientSpec.bessel_drift(3.0),
                             representation=Representation.DRIFT_INTEGRAL)
        grid = make_grid(1e-4, 1.0)
        fractions = []
        for i in range(10):
            path = simulate_regularized_drift(problem, grid, NoiseSource(6, i), 1e-4)
            fractions.append(zero_time_fraction(path, 1e-3))
        assert np.mean(fractions) < 1e-3

    def test_boundary_start_marginal_law(self):
        problem = SdeProblem(x0=0.0, coefficients=CoefficientSpec.bessel_drift(1.5),
                             representation=Representation.DRIFT_INTEGRAL)
        grid = make_grid(1e-4, 1.0)
        vals = euler_regularized_marginal(problem, grid, NoiseSource(3, 0), 20_000,
                                          delta=1e-2)
        params = BesselParams(1.5)
        d = ks_distance(vals, lambda ys: transition_cdf_many(params, 1.0, 0.0, ys))
        assert d < ks_null_quantile(20_000, 0.99) + 0.004

    def test_delta_validated(self):
        problem = SdeProblem(x0=1.0, coefficients=CoefficientSpec.bessel_drift(2.0),
                             representation=Representation.DRIFT_INTEGRAL)
        with pytest.raises(InvalidArgumentError):
            simulate_regularized_drift(problem, make_grid(0.1, 1.0), NoiseSource(0, 0),
                                       delta=0.0)

    def test_representation_enforced(self):
        problem = SdeProblem(x0=1.0, coefficients=CoefficientSpec.bessel_drift(2.0),
                             representation=Representation.REFLECTED)
        with pytest.raises(InvalidArgumentError):
            simulate_regularized_drift(problem, make_grid(0.1, 1.0), NoiseSource(0, 0),
                                       delta=0.1)


class TestBesselExact:
    def test_single_step_equals_transition_sampler(self):
        grid = make_grid(1.0, 1.0)
        path = simulate_bessel_exact(2.5, 0.7, grid, NoiseSource(13, 4))
        direct = sample_transition(BesselParams(2.5), 1.0, 0.7, NoiseSource(13, 4))
        assert path.values[1] == direct

    def test_folded_normal_marginal(self):
        sample = bessel_exact_marginal(1.0, 0.0, 1.0, 200_000, NoiseSource(8, 0),
                                       n_steps=4)
        params = BesselParams(1.0)
        d = ks_distance(sample, lambda ys: transition_cdf_many(params, 1.0, 0.0, ys))
        assert d < 4e-3

    def test_instantaneous_reflection_small_zero_time(self):
        grid = make_grid(1e-3, 1.0)
        fractions = []
        for block in bessel_exact_path_blocks(0.5, 0.0, grid, NoiseSource(30, 0), 200):
            fractions.extend(np.mean(block[:, :-1] < 1e-3, axis=1))
        assert np.mean(fractions) < 0.05

    def test_determinism(self):
        grid = make_grid(0.01, 1.0)
        a = simulate_bessel_exact(1.5, 1.0, grid, NoiseSource(5, 5))
        b = simulate_bessel_exact(1.5, 1.0, grid, NoiseSource(5, 5))
        np.testing.assert_array_equal(a.values, b.values)


class TestPowerDiffusion:
    def test_absorbed_from_zero_stays_zero(self):
        grid = make_grid(1e-3, 1.0)
        path = simulate_power_diffusion(0.25, 0.0, grid, NoiseSource(11, 1), "absorbed")
        assert np.all(path.values == 0.0)
        assert zero_time_fraction(path, 1e-3) == 1.0

    def test_sticky_free_spends_little_time_near_zero(self):
        grid = make_grid(1e-5, 1.0)
        fractions = [
            zero_time_fraction(
                simulate_power_diffusion(0.15, 0.0, grid, NoiseSource(40, i),
                                         "sticky_free"), 1e-3)
            for i in range(5)
        ]
        assert np.mean(fractions) < 0.02

    def test_variants_diverge_in_law(self):
        grid = make_grid(1e-3, 1.0)
        sticky = power_diffusion_marginal(0.25, 0.0, grid, NoiseSource(12, 0), 2000,
                                          "sticky_free")
        absorbed = power_diffusion_marginal(0.25, 0.0, grid, NoiseSource(12, 0), 2000,
                                            "absorbed")
        assert ks_two_sample(sticky, absorbed) > 0.5

    def test_alpha_validated(self):
        with pytest.raises(InvalidArgumentError):
            simulate_power_diffusion(0.6, 0.0, make_grid(0.1, 1.0), NoiseSource(0, 0),
                                     "sticky_free")
        with pytest.raises(InvalidArgumentError):
            simulate_power_diffusion(0.25, 0.0, make_grid(0.1, 1.0), NoiseSource(0, 0),
                                     "bouncy")


class TestEnsembleKernels:
    def test_marginal_matches_per_path_streams(self):
        # The Euler ensemble draws one substream per path, so it reproduces
        # the per-path simulator exactly.
        problem = SdeProblem(x0=0.5, coefficients=CoefficientSpec.bessel_drift(2.0),
                             representation=Representation.DRIFT_INTEGRAL)
        grid = make_grid(1e-2, 1.0)
        base = NoiseSource(77, 0)
        ensemble = euler_regularized_marginal(problem, grid, base, 5, delta=0.05)
        singles = [
            simulate_regularized_drift(problem, grid, base.substream(i), 0.05).values[-1]
            for i in range(5)
        ]
        np.testing.assert_array_equal(ensemble, singles)

    def test_paths_from_blocks_shapes(self):
        grid = make_grid(0.1, 1.0)
        blocks = bessel_exact_path_blocks(2.0, 1.0, grid, NoiseSource(2, 0), 7,
                                          block_size=3)
        paths = list(paths_from_blocks(grid, blocks))
        assert len(paths) == 7
        assert all(p.values.shape == (11,) for p in paths)
        assert all(np.all(p.values >= 0) for p in paths)

    def test_block_sampler_deterministic(self):
        grid = make_grid(0.1, 1.0)
        a = np.vstack(list(bessel_exact_path_blocks(1.5, 0.0, grid, NoiseSource(4, 0),
                                                    6, block_size=2)))
        b = np.vstack(list(bessel_exact_path_blocks(1.5, 0.0, grid, NoiseSource(4, 0),
                                                    6, block_size=2)))
        np.testing.assert_array_equal(a, b)
