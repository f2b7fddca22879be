import math

import numpy as np
import pytest
from scipy.integrate import quad

from ssde.core import (
    CoefficientSpec,
    NoiseSource,
    Path,
    Representation,
    SdeProblem,
    make_grid,
    sample_brownian,
)
from ssde.errors import InsufficientSampleError, InvalidArgumentError
from ssde.schemes import (
    bessel_exact_path_blocks,
    paths_from_blocks,
    simulate_euler_reflected,
    simulate_power_diffusion,
)
from ssde.testfn import (
    TestFunction,
    bump_family,
    constant_test_function,
    eta_delta,
    increment_samples,
    ito_residual,
    martingale_conditional_stats,
    martingale_increment_stat,
    mollifier,
    mollifier_derivative,
    smooth_ramp,
    zeta_delta,
)


class TestMollifier:
    def test_outside_support(self):
        assert mollifier(-1.0) == 0.0
        assert mollifier(0.0) == 0.0
        assert mollifier(2.0) == 0.0

    def test_peak_value(self):
        # C = 1 / int_0^2 exp(1/((x-1)^2-1)) dx, evaluated by quadrature.
        norm, _ = quad(lambda x: math.exp(1.0 / ((x - 1.0) ** 2 - 1.0)), 0.0, 2.0,
                       epsabs=1e-13)
        c = 1.0 / norm
        assert c == pytest.approx(2.2523, abs=2e-4)
        assert float(mollifier(1.0)) == pytest.approx(c * math.exp(-1.0), rel=1e-9)

    def test_unit_mass(self):
        total, _ = quad(lambda x: float(mollifier(np.array([x]))[0]), 0.0, 2.0,
                        epsabs=1e-12, limit=200)
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_derivative_closed_form(self):
        xs = np.linspace(0.05, 1.95, 41)
        h = 1e-6
        fd = (mollifier(xs + h) - mollifier(xs - h)) / (2.0 * h)
        np.testing.assert_allclose(mollifier_derivative(xs), fd, atol=1e-8)


class TestSmoothRamp:
    def test_zero_below_support(self):
        u, du, d2u = smooth_ramp(3, -0.5)
        assert (u, float(du), float(d2u)) == (0.0, 0.0, 0.0)

    def test_unit_slope_beyond_support(self):
        n = 7
        _, du, _ = smooth_ramp(n, 2.0 / n)
        assert float(du) == 1.0
        _, du, _ = smooth_ramp(n, 5.0)
        assert float(du) == 1.0

    def test_linear_tail_increment(self):
        n = 7
        u3, _, _ = smooth_ramp(n, 3.0 / n)
        u2, _, _ = smooth_ramp(n, 2.0 / n)
        assert (u3 - u2) == pytest.approx(1.0 / n, abs=1e-10)

    def test_second_derivative_is_scaled_mollifier(self):
        n = 5
        xs = np.linspace(-0.2, 0.6, 33)
        _, _, d2u = smooth_ramp(n, xs)
        np.testing.assert_allclose(d2u, n * mollifier(n * xs), rtol=1e-12)

    def test_converges_to_running_max(self):
        a = 0.7
        xs = np.linspace(-1.0, 3.0, 400)
        for n in (5, 50, 500):
            u, _, _ = smooth_ramp(n, xs - a)
            err = np.max(np.abs(u + a - np.maximum(xs, a)))
            assert err <= 2.0 / n + 1e-12

    def test_n_validated(self):
        with pytest.raises(InvalidArgumentError):
            smooth_ramp(0, 1.0)


class TestEtaDelta:
    def test_identity_above_half_delta(self):
        eta = eta_delta(0.4)
        xs = np.array([0.2, 0.4, 1.3, 7.0])
        np.testing.assert_allclose(eta.f(xs), xs, atol=1e-10)
        np.testing.assert_allclose(eta.df(xs), np.ones(4), atol=1e-12)

    def test_flat_near_zero(self):
        eta = eta_delta(0.4)
        assert float(eta.df(np.array([0.05]))[0]) == 0.0
        assert float(eta.d2f(np.array([0.05]))[0]) == 0.0

    def test_curvature_scales_inversely_with_delta(self):
        # The construction rescales one profile, so max eta'' * delta is a
        # single constant K across deltas.
        peaks = {}
        for delta in (0.1, 0.01):
            eta = eta_delta(delta)
            xs = np.linspace(delta / 4.0, delta / 2.0, 400)
            peaks[delta] = np.max(eta.d2f(xs)) * delta
        assert peaks[0.1] == pytest.approx(peaks[0.01], rel=1e-3)
        assert peaks[0.1] < 10.0

    def test_nondecreasing(self):
        eta = eta_delta(0.3)
        xs = np.linspace(0.0, 2.0, 500)
        assert np.all(np.diff(eta.f(xs)) >= 0)


class TestZetaDelta:
    def test_clamp_values(self):
        assert zeta_delta(1.0, 0.5) == 1.0
        assert zeta_delta(1.0, 2.0) == 2.0

    def test_clamp_identity_with_eta(self):
        # x v delta = eta_delta(x) v delta on [0, 3].
        delta = 0.3
        eta = eta_delta(delta)
        xs = np.linspace(0.0, 3.0, 301)
        np.testing.assert_allclose(zeta_delta(delta, eta.f(xs)),
                                   zeta_delta(delta, xs), atol=1e-12)

    def test_delta_validated(self):
        with pytest.raises(InvalidArgumentError):
            zeta_delta(0.0, 1.0)


class TestBumpFamily:
    def test_family_size(self):
        assert len(bump_family([0.1, 0.2, 0.3])) == 3

    def test_flat_and_constant_zones(self):
        fn = bump_family([0.2])[0]
        assert float(fn.df(np.array([0.1]))[0]) == 0.0
        assert float(fn.d2f(np.array([0.1]))[0]) == 0.0
        assert float(fn.f(np.array([0.8]))[0]) == pytest.approx(
            float(fn.f(np.array([5.0]))[0]))

    def test_strictly_increasing_on_ramp(self):
        fn = bump_family([0.2])[0]
        xs = np.linspace(0.2, 0.6, 100)
        vals = fn.f(xs)
        assert np.all(np.diff(vals) > 0)

    def test_invalid_radius(self):
        with pytest.raises(InvalidArgumentError):
            bump_family([0.1, -0.2])
        with pytest.raises(InvalidArgumentError):
            bump_family([])

    def test_invariant_check_rejects_non_flat(self):
        bad = TestFunction(name="bad", flat_radius=0.5,
                           f=lambda x: np.asarray(x, dtype=float) ** 2,
                           df=lambda x: 2.0 * np.asarray(x, dtype=float),
                           d2f=lambda x: np.full_like(np.asarray(x, dtype=float), 2.0))
        with pytest.raises(InvalidArgumentError):
            bad.check_invariants()


class TestItoResidual:
    def test_constant_function_zero(self):
        grid = make_grid(1e-3, 1.0)
        noise = NoiseSource(3, 0)
        problem = SdeProblem(x0=0.0, coefficients=CoefficientSpec.unit_diffusion(),
                             representation=Representation.REFLECTED)
        inc = sample_brownian(grid, noise)
        path = simulate_euler_reflected(problem, grid, noise, increments=inc)
        assert ito_residual(path, inc, constant_test_function(), problem.coefficients) == 0.0

    def test_frozen_dynamics_zero(self):
        grid = make_grid(1e-2, 1.0)
        coeffs = CoefficientSpec.custom(
            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)))
        path = Path(grid=grid, values=np.full(grid.n_steps + 1, 2.0))
        inc = sample_brownian(grid, NoiseSource(0, 0))
        fn = bump_family([0.5])[0]
        assert ito_residual(path, inc, fn, coeffs) == 0.0

    def test_exact_discrete_recursion_zero_to_rounding(self):
        # When the path is the discrete equation itself and f is the
        # identity on its range, the expansion telescopes exactly.
        grid = make_grid(1e-3, 1.0)
        a, sigma = 0.1, 0.2
        coeffs = CoefficientSpec.custom(
            lambda x: np.full_like(np.asarray(x, dtype=float), a),
            lambda x: np.full_like(np.asarray(x, dtype=float), sigma))
        inc = sample_brownian(grid, NoiseSource(14, 2))
        values = np.empty(grid.n_steps + 1)
        values[0] = 2.0
        for k in range(grid.n_steps):
            values[k + 1] = values[k] + a * grid.step + sigma * inc[k]
        assert values.min() > 0.5
        path = Path(grid=grid, values=values)
        fn = eta_delta(0.5)  # identity on [0.25, inf)
        assert ito_residual(path, inc, fn, coeffs) < 1e-12

    def test_reflected_path_refinement(self):
        # The residual on projected-Euler paths shrinks like sqrt(h).
        problem = SdeProblem(x0=0.0, coefficients=CoefficientSpec.unit_diffusion(),
                             representation=Representation.REFLECTED)
        fn = bump_family([0.2])[0]
        medians = []
        for h in (1e-2, 1e-3):
            residuals = []
            for i in range(20):
                grid = make_grid(h, 1.0)
                noise = NoiseSource(4, i)
                inc = sample_brownian(grid, noise)
                path = simulate_euler_reflected(problem, grid, noise, increments=inc)
                residuals.append(ito_residual(path, inc, fn, problem.coefficients))
            medians.append(np.median(residuals))
        assert medians[1] < medians[0]
        # Fit C in residual <= C sqrt(h) and sanity-bound it.
        assert medians[0] <= 20.0 * math.sqrt(1e-2)

    def test_length_mismatch(self):
        grid = make_grid(0.1, 1.0)
        path = Path(grid=grid, values=np.ones(11))
        with pytest.raises(InvalidArgumentError):
            ito_residual(path, np.zeros(5), constant_test_function(),
                         CoefficientSpec.unit_diffusion())


def _exact_ensemble(beta, x0, n, grid, seed):
    return paths_from_blocks(
        grid, bessel_exact_path_blocks(beta, x0, grid, NoiseSource(seed, 0), n))


class TestMartingaleStat:
    def test_constant_function_guarded_to_zero(self):
        grid = make_grid(0.25, 1.0)
        ensemble = _exact_ensemble(2.0, 1.0, 50, grid, 5)
        z = martingale_increment_stat(ensemble, constant_test_function(),
                                      CoefficientSpec.bessel_drift(2.0), 0.25, 1.0)
        assert z == 0.0

    def test_insufficient_sample(self):
        grid = make_grid(0.25, 1.0)
        ensemble = _exact_ensemble(2.0, 1.0, 10, grid, 5)
        with pytest.raises(InsufficientSampleError):
            martingale_increment_stat(ensemble, bump_family([0.3])[0],
                                      CoefficientSpec.bessel_drift(2.0), 0.25, 1.0)

    def test_exact_bessel_near_null(self):
        grid = make_grid(1e-3, 1.0)
        coeffs = CoefficientSpec.bessel_drift(0.5)
        for fn in bump_family([0.25, 0.6]):
            ensemble = _exact_ensemble(0.5, 0.0, 3000, grid, 8)
            z = martingale_increment_stat(ensemble, fn, coeffs, 0.25, 1.0)
            assert abs(z) < 4.0

    def test_conditional_stats_near_null(self):
        grid = make_grid(1e-3, 1.0)
        coeffs = CoefficientSpec.bessel_drift(1.5)
        fn = bump_family([0.4])[0]
        ensemble = _exact_ensemble(1.5, 0.5, 3000, grid, 9)
        z1, z2 = martingale_conditional_stats(ensemble, fn, coeffs, 0.25, 1.0)
        assert abs(z1) < 4.0 and abs(z2) < 4.0

    def test_conditional_stats_guarded(self):
        grid = make_grid(0.25, 1.0)
        ensemble = _exact_ensemble(2.0, 1.0, 50, grid, 5)
        z1, z2 = martingale_conditional_stats(ensemble, constant_test_function(),
                                              CoefficientSpec.bessel_drift(2.0),
                                              0.25, 1.0)
        assert (z1, z2) == (0.0, 0.0)

    def test_absorbed_class_detected_by_zero_time_not_by_flat_family(self):
        # The absorbed power-diffusion satisfies the expansion identity for
        # every admissible (flat) test function: its increments are true
        # martingale increments, so condition (ii) alone cannot reject it.
        # Membership in the zero-time class is what fails, mirroring the
        # non-uniqueness of weak solutions for the power equation.
        from ssde.localtime import zero_time_fraction
        alpha = 0.25
        grid = make_grid(1e-3, 1.0)
        coeffs = CoefficientSpec.power_diffusion(alpha)
        paths = [simulate_power_diffusion(alpha, 0.5, grid, NoiseSource(60, i),
                                          "absorbed") for i in range(500)]
        fn = bump_family([0.1])[0]
        z = martingale_increment_stat(paths, fn, coeffs, 0.25, 1.0)
        assert abs(z) < 4.0
        fractions = [zero_time_fraction(p, 1e-3) for p in paths]
        assert np.mean(fractions) > 0.2


class TestIncrementSamples:
    def test_requires_ordered_times(self):
        grid = make_grid(0.25, 1.0)
        values = np.ones((3, 5))
        with pytest.raises(InvalidArgumentError):
            increment_samples(values, grid, constant_test_function(),
                              CoefficientSpec.unit_diffusion(), 0.75, 0.25)

    def test_off_grid_time_rejected(self):
        grid = make_grid(0.25, 1.0)
        values = np.ones((3, 5))
        with pytest.raises(InvalidArgumentError):
            increment_samples(values, grid, constant_test_function(),
                              CoefficientSpec.unit_diffusion(), 0.3, 1.0)
