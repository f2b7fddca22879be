import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssde.core import (
    CoefficientSpec,
    NoiseSource,
    Path,
    Representation,
    SdeProblem,
    TimeGrid,
    make_grid,
    noise_streams,
    sample_brownian,
)
from ssde.errors import InvalidArgumentError


class TestMakeGrid:
    def test_exact_division(self):
        grid = make_grid(0.5, 1.0)
        assert grid.n_steps == 2
        np.testing.assert_allclose(grid.times, [0.0, 0.5, 1.0])

    def test_ceiling_rule(self):
        grid = make_grid(0.4, 1.0)
        assert grid.n_steps == 3
        assert grid.horizon == pytest.approx(1.2)

    def test_thousand_steps(self):
        assert make_grid(1e-3, 1.0).n_steps == 1000

    def test_invalid_arguments(self):
        with pytest.raises(InvalidArgumentError):
            make_grid(0.0, 1.0)
        with pytest.raises(InvalidArgumentError):
            make_grid(0.1, -1.0)

    @given(step=st.floats(min_value=1e-3, max_value=10.0),
           horizon=st.floats(min_value=1e-3, max_value=100.0))
    @settings(max_examples=200, deadline=None)
    def test_grid_invariants(self, step, horizon):
        grid = make_grid(step, horizon)
        times = grid.times
        assert times[0] == 0.0
        assert np.all(np.diff(times) > 0)
        # Covering property with float-safe slack of one part in 1e12.
        assert grid.horizon >= horizon * (1.0 - 1e-12)
        # Minimality: one step fewer would not cover.
        if grid.n_steps > 1:
            assert (grid.n_steps - 1) * step < horizon * (1.0 + 1e-12)


class TestNoiseSource:
    def test_determinism(self):
        grid = make_grid(0.01, 1.0)
        a = sample_brownian(grid, NoiseSource(123, 5))
        b = sample_brownian(grid, NoiseSource(123, 5))
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        grid = make_grid(0.01, 1.0)
        a = sample_brownian(grid, NoiseSource(123, 5))
        b = sample_brownian(grid, NoiseSource(123, 6))
        assert not np.array_equal(a, b)

    def test_order_independent(self):
        # Drawing stream 7 after exhausting stream 3 changes nothing.
        grid = make_grid(0.01, 1.0)
        first = sample_brownian(grid, NoiseSource(9, 7))
        sample_brownian(grid, NoiseSource(9, 3))
        again = sample_brownian(grid, NoiseSource(9, 7))
        assert np.array_equal(first, again)

    def test_seed_range_validated(self):
        with pytest.raises(InvalidArgumentError):
            NoiseSource(-1, 0)
        with pytest.raises(InvalidArgumentError):
            NoiseSource(1 << 64, 0)
        with pytest.raises(InvalidArgumentError):
            NoiseSource(1, -2)

    def test_noise_streams_enumeration(self):
        streams = list(noise_streams(11, 3, base_stream=4))
        assert [s.stream_index for s in streams] == [4, 5, 6]
        assert all(s.seed == 11 for s in streams)

    def test_increment_moments(self):
        # Mean within 4 standard errors, variance within chi-square band.
        step = 1e-3
        grid = TimeGrid(step=step, n_steps=1_000_000)
        inc = sample_brownian(grid, NoiseSource(2024, 0))
        assert abs(np.mean(inc)) < 4e-3 * math.sqrt(step)
        assert abs(np.var(inc) / step - 1.0) < 0.01


class TestCoefficientSpec:
    def test_bessel_drift_values(self):
        spec = CoefficientSpec.bessel_drift(3.0)
        np.testing.assert_allclose(spec.drift(np.array([1.0, 2.0])), [1.0, 0.5])
        np.testing.assert_allclose(spec.diffusion(np.array([1.0, 2.0])), [1.0, 1.0])

    def test_power_diffusion_range(self):
        with pytest.raises(InvalidArgumentError):
            CoefficientSpec.power_diffusion(0.5)
        with pytest.raises(InvalidArgumentError):
            CoefficientSpec.power_diffusion(0.0)
        spec = CoefficientSpec.power_diffusion(0.25)
        np.testing.assert_allclose(spec.diffusion(np.array([16.0])), [2.0])

    def test_lipschitz_probe(self):
        assert CoefficientSpec.bessel_drift(2.0).check_locally_lipschitz()
        jumpy = CoefficientSpec.custom(
            lambda x: 1e6 * (np.asarray(x, dtype=float) > 1.0),
            lambda x: np.ones_like(np.asarray(x, dtype=float)),
        )
        assert not jumpy.check_locally_lipschitz(bound=1e3)

    def test_nonvanishing_sigma_probe(self):
        assert CoefficientSpec.bessel_drift(1.0).check_nonvanishing_sigma()
        vanishing = CoefficientSpec.custom(
            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            lambda x: np.clip(np.asarray(x, dtype=float) - 1.0, 0.0, None),
        )
        assert not vanishing.check_nonvanishing_sigma()


class TestPath:
    def test_negative_values_rejected(self):
        grid = make_grid(0.5, 1.0)
        with pytest.raises(InvalidArgumentError):
            Path(grid=grid, values=np.array([0.0, -0.1, 0.2]))

    def test_length_mismatch_rejected(self):
        grid = make_grid(0.5, 1.0)
        with pytest.raises(InvalidArgumentError):
            Path(grid=grid, values=np.array([0.0, 0.1]))

    def test_reflection_term_support_condition(self):
        grid = make_grid(0.5, 1.0)
        # Growth while the path is away from zero is rejected.
        with pytest.raises(InvalidArgumentError):
            Path(grid=grid, values=np.array([0.0, 1.0, 1.0]),
                 reflection_term=np.array([0.0, 0.5, 0.5]))
        # Growth onto the zero set is fine.
        p = Path(grid=grid, values=np.array([1.0, 0.0, 2.0]),
                 reflection_term=np.array([0.0, 0.3, 0.3]))
        assert p.reflection_term[-1] == 0.3

    def test_reflection_term_monotone(self):
        grid = make_grid(0.5, 1.0)
        with pytest.raises(InvalidArgumentError):
            Path(grid=grid, values=np.array([0.0, 0.0, 0.0]),
                 reflection_term=np.array([0.0, 0.5, 0.2]))

    def test_value_at_time(self):
        grid = make_grid(0.25, 1.0)
        p = Path(grid=grid, values=np.array([1.0, 2.0, 3.0, 4.0, 5.0]))
        assert p.value_at_time(0.5) == 3.0
        with pytest.raises(InvalidArgumentError):
            p.value_at_time(0.3)


class TestSdeProblem:
    def test_negative_start_rejected(self):
        with pytest.raises(InvalidArgumentError):
            SdeProblem(x0=-0.5, coefficients=CoefficientSpec.unit_diffusion(),
                       representation=Representation.REFLECTED)
