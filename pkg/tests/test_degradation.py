import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from laserfail.degradation import (
    BOLTZMANN_EV,
    ConfigError,
    DegradationCoefficients,
    DegradationMode,
    GenerationConfig,
    GenerationError,
    LaserParams,
    NormalDist,
    UniformDist,
    compute_rate_k,
    current_at,
    generate_dataset,
    generate_trajectory,
)
from laserfail.storage import dataset_csv

LASER = LaserParams(optical_power=10.0, threshold_current=20.0, temperature=300.0, wavelength=1550.0)


def coeffs(beta=0.5, n=1.0, mu0=0.0, ea=0.0):
    return DegradationCoefficients(beta, n, mu0, ea)


def scalar_current(t, i0, beta, p, n, mu0, ea, temp):
    # Independent scalar evaluation of the rate law, no numpy.
    k = p**n * math.exp(mu0 - ea / (BOLTZMANN_EV * temp))
    return i0 + beta * math.exp(k * t)


class TestRate:
    def test_all_factors_collapse(self):
        laser = LaserParams(1.0, 20.0, 123.0, 1550.0)
        assert compute_rate_k(laser, coeffs(n=3.0)) == 1.0

    def test_derating_only(self):
        laser = LaserParams(2.0, 20.0, 300.0, 1550.0)
        assert compute_rate_k(laser, coeffs(n=1.0)) == 2.0

    def test_arrhenius_factor(self):
        laser = LaserParams(1.0, 20.0, 300.0, 1550.0)
        k = compute_rate_k(laser, coeffs(n=0.0, ea=0.025852))
        assert k == pytest.approx(math.exp(-0.025852 / (8.617333262e-5 * 300.0)), rel=1e-15)
        assert k == pytest.approx(0.36788, abs=5e-6)

    def test_overflow_names_scale_parameter(self):
        with pytest.raises(OverflowError, match="scale_parameter"):
            compute_rate_k(LASER, coeffs(mu0=1000.0))

    @given(
        st.floats(0.01, 1.0),
        st.floats(200.0, 400.0),
        st.floats(1.0, 50.0),
    )
    def test_rate_increases_with_temperature(self, ea, temp, dt):
        c = coeffs(n=0.5, mu0=5.0, ea=ea)
        cold = compute_rate_k(LaserParams(10.0, 20.0, temp, 1550.0), c)
        hot = compute_rate_k(LaserParams(10.0, 20.0, temp + dt, 1550.0), c)
        assert hot > cold


class TestCurrent:
    def test_start_value(self):
        assert current_at(0.0, 20.0, 0.5, 0.3) == 20.5

    def test_no_degradation_term(self):
        assert current_at(1234.0, 20.0, 0.0, 0.01) == 20.0

    def test_one_e_fold(self):
        assert current_at(100.0, 20.0, 0.5, 0.01) == pytest.approx(20.0 + 0.5 * math.e, rel=1e-15)
        assert current_at(100.0, 20.0, 0.5, 0.01) == pytest.approx(21.35914, abs=1e-5)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            current_at(-1.0, 20.0, 0.5, 0.01)

    def test_overflow(self):
        with pytest.raises(OverflowError):
            current_at(1e6, 20.0, 0.5, 1.0)


class TestTrajectory:
    def noiseless(self, **kw):
        return GenerationConfig(observation_noise_sigma=0.0, **kw)

    def test_normal_is_flat(self):
        s = generate_trajectory(DegradationMode.NORMAL, LASER, coeffs(), self.noiseless(), np.random.default_rng(0))
        assert np.all(s.series == 20.0)
        assert s.fault_onset is None

    def test_sudden_step(self):
        cfg = self.noiseless(
            sudden_onset_time=UniformDist(50.0, 50.0),
            sudden_jump_magnitude=NormalDist(10.0, 0.0),
        )
        s = generate_trajectory(DegradationMode.SUDDEN, LASER, coeffs(), cfg, np.random.default_rng(0))
        assert np.all(s.series[s.times < 50] == 20.0)
        assert np.all(s.series[s.times >= 50] == 30.0)
        assert s.fault_onset == 50.0

    def test_rapid_matches_pointwise_formula(self):
        c = coeffs(beta=1.3, n=0.3, mu0=9.2, ea=0.35)
        s = generate_trajectory(DegradationMode.RAPID, LASER, c, self.noiseless(), np.random.default_rng(0))
        expected = [scalar_current(t, 20.0, 1.3, 10.0, 0.3, 9.2, 0.35, 300.0) for t in s.times]
        np.testing.assert_allclose(s.series, expected, rtol=1e-12, atol=0)
        assert len(s.series) == 100

    def test_noise_is_applied(self):
        s = generate_trajectory(DegradationMode.NORMAL, LASER, coeffs(), GenerationConfig(), np.random.default_rng(0))
        assert 0.05 < np.std(s.series) < 0.15  # 0.5 % of 20 mA

    @settings(max_examples=50, deadline=None)
    @given(
        st.sampled_from([DegradationMode.GRADUAL, DegradationMode.RAPID]),
        st.floats(0.1, 3.0),
        st.floats(0.0, 1.0),
        st.floats(4.0, 7.0),
        st.floats(0.3, 0.5),
    )
    def test_noiseless_rate_law_modes_strictly_increase(self, mode, beta, n, mu0, ea):
        s = generate_trajectory(mode, LASER, coeffs(beta, n, mu0, ea), self.noiseless(), np.random.default_rng(0))
        assert np.all(np.diff(s.series) > 0)


class TestDistributions:
    def test_truncated_draws_stay_in_bounds(self):
        rng = np.random.default_rng(3)
        d = NormalDist(0.0, 1.0, -1.5, 1.5)
        draws = [d.draw(rng) for _ in range(200)]
        assert min(draws) >= -1.5 and max(draws) <= 1.5

    def test_redraw_budget_exhausted(self):
        with pytest.raises(GenerationError, match="8 redraws"):
            NormalDist(0.0, 1.0, 100.0, 101.0).draw(np.random.default_rng(0))

    def test_negative_std_rejected(self):
        with pytest.raises(ConfigError):
            NormalDist(0.0, -1.0)


class TestDataset:
    def test_one_per_mode(self):
        ds = generate_dataset(GenerationConfig(samples_per_mode=1))
        assert [s.mode for s in ds] == list(DegradationMode)

    def test_balanced_and_sized(self):
        ds = generate_dataset(GenerationConfig(samples_per_mode=25))
        assert len(ds) == 100
        assert np.bincount([int(s.mode) for s in ds]).tolist() == [25] * 4
        assert [s.sample_id for s in ds] == list(range(100))

    def test_deterministic_bytes(self):
        cfg = GenerationConfig(samples_per_mode=3, rng_seed=99)
        assert dataset_csv(generate_dataset(cfg)) == dataset_csv(generate_dataset(cfg))

    def test_seed_changes_data(self):
        a = generate_dataset(GenerationConfig(samples_per_mode=2, rng_seed=1))
        b = generate_dataset(GenerationConfig(samples_per_mode=2, rng_seed=2))
        assert not np.array_equal(a[0].series, b[0].series)

    def test_samples_are_order_independent(self):
        from laserfail.degradation import generate_sample

        cfg = GenerationConfig(samples_per_mode=4)
        ds = generate_dataset(cfg)
        for i in reversed(range(len(ds))):
            assert np.array_equal(generate_sample(cfg, i).series, ds[i].series)

    def test_empty_pool(self):
        with pytest.raises(ConfigError, match="empty"):
            generate_dataset(GenerationConfig(samples_per_mode=1, laser_pool=()))

    def test_laser_drawn_from_pool(self):
        cfg = GenerationConfig(samples_per_mode=20)
        assert all(s.laser in cfg.laser_pool for s in generate_dataset(cfg))

    def test_currents_non_negative_and_times_increasing(self):
        for s in generate_dataset(GenerationConfig(samples_per_mode=5)):
            assert np.all(s.series >= 0)
            assert np.all(np.diff(s.times) > 0)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"samples_per_mode": 0},
            {"sample_interval": 0.0},
            {"horizon": 0.5},
            {"sudden_onset_time": UniformDist(100.0, 500.0)},
            {"observation_noise_sigma": -1.0},
        ],
    )
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigError):
            GenerationConfig(**kwargs)

    def test_config_round_trip(self):
        cfg = GenerationConfig(samples_per_mode=7, rng_seed=5)
        assert GenerationConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


@pytest.fixture(scope="module")
def dataset():
    return generate_dataset(GenerationConfig(samples_per_mode=300, observation_noise_sigma=0.0))


class TestDefaultTimescales:
    """The default coefficient distributions must reproduce the three failure time scales."""

    def crossing_hours(self, s, fraction=0.2):
        above = np.flatnonzero(s.series > s.laser.threshold_current * (1 + fraction))
        return s.times[above[0]] if len(above) else math.inf

    def test_rapid_reaches_end_of_life_within_100_hours(self, dataset):
        rapid = [s for s in dataset if s.mode == DegradationMode.RAPID]
        assert max(self.crossing_hours(s) for s in rapid) < 100

    def test_gradual_takes_hundreds_of_hours(self, dataset):
        gradual = [s for s in dataset if s.mode == DegradationMode.GRADUAL]
        hours = [self.crossing_hours(s) for s in gradual]
        assert min(hours) > 100 and max(hours) < 400

    def test_sudden_onset_in_latter_part(self, dataset):
        sudden = [s for s in dataset if s.mode == DegradationMode.SUDDEN]
        assert all(0.4 * 400 <= s.fault_onset < 400 for s in sudden)
