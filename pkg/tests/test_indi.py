"""Tests for the INDI residual estimator."""

import numpy as np
import pytest

from quad_residual_lab.config import FilterConfig
from quad_residual_lab.controllers import hover_rotor_speeds, mix_to_rotors
from quad_residual_lab.dynamics import SensorFrame, VehicleState
from quad_residual_lab.indi import (
    ButterworthFilter,
    FilterNotWarmError,
    IndiState,
    ResidualEstimate,
    estimate_residual,
    estimate_residual_pwm,
    filter_step,
    na_indi_residual,
)
from quad_residual_lab.mathcore import E_Z, vec3

RATE = 500.0


def _frame(params, t, force=None, rpm=None, pwm=None, payload_position=None, extra_mass=0.0):
    """Frame of a level vehicle at rest with the given residual force acting on it."""
    force = np.zeros(3) if force is None else force
    rpm = hover_rotor_speeds(params, extra_mass) if rpm is None else rpm
    pwm = rpm / params.rotor_speed_max if pwm is None else pwm
    accel = (params.hover_thrust * E_Z + force) / params.mass
    return SensorFrame(accel, np.zeros(3), rpm, pwm, t, payload_position)


@pytest.fixture
def state():
    """Level vehicle at rest."""
    return VehicleState.at_rest(vec3(0, 0, 1))


@pytest.fixture
def indi(params, config):
    """Estimator at the default 500 Hz."""
    return IndiState(params, config.filter, RATE)


class TestButterworth:
    """Test the Butterworth low-pass."""

    def test_unit_dc_gain(self):
        """The low-pass passes constants unchanged."""
        assert ButterworthFilter(2, 8.0, RATE).dc_gain == pytest.approx(1.0, rel=1e-12)

    def test_starts_in_steady_state(self):
        """The first sample is passed through without a transient."""
        filt = ButterworthFilter(2, 8.0, RATE)
        for _ in range(3):
            np.testing.assert_allclose(filt.step(vec3(1.0, -2.0, 3.0)), vec3(1.0, -2.0, 3.0), rtol=1e-12)

    def test_step_settles(self):
        """After a step the output settles on the new value."""
        filt = ButterworthFilter(2, 8.0, RATE, channels=1)
        filt.step(np.zeros(1))
        first = filt.step(np.ones(1))
        assert 0.0 < first[0] < 0.1
        for _ in range(500):
            out = filt.step(np.ones(1))
        assert out[0] == pytest.approx(1.0, abs=1e-6)

    def test_cutoff_above_nyquist(self):
        """A cutoff at or above Nyquist is rejected."""
        with pytest.raises(ValueError, match="Nyquist"):
            ButterworthFilter(2, 300.0, RATE)

    def test_reset(self):
        """Reset forgets the history."""
        filt = ButterworthFilter(2, 8.0, RATE)
        filt.step(np.ones(3))
        filt.reset()
        assert filt.samples == 0
        assert filt.state is None

    def test_gain_at_cutoff(self):
        """A sine at the cutoff leaves with amplitude 1/sqrt(2)."""
        filt = ButterworthFilter(2, 8.0, RATE, channels=1)
        t = np.arange(2000) / RATE
        out = np.array([filt.step(np.array([np.sin(2.0 * np.pi * 8.0 * s)]))[0] for s in t])
        assert np.max(np.abs(out[1000:])) == pytest.approx(1.0 / np.sqrt(2.0), rel=2e-2)

    def test_linearity(self, rng):
        """Filtering a weighted sum equals the weighted sum of the filtered inputs."""
        a, b, c = (ButterworthFilter(2, 8.0, RATE) for _ in range(3))
        for _ in range(300):
            x, y = rng.standard_normal(3), rng.standard_normal(3)
            expected = 2.0 * a.step(x) - 0.5 * b.step(y)
            np.testing.assert_allclose(c.step(2.0 * x - 0.5 * y), expected, atol=1e-9)

    def test_zero_in_zero_out(self):
        """Zero input from a zero start stays zero."""
        filt = ButterworthFilter(2, 8.0, RATE)
        for _ in range(50):
            out = filt.step(np.zeros(3))
        np.testing.assert_array_equal(out, np.zeros(3))

    def test_reduces_noise(self, rng):
        """White noise around a constant comes out with a much smaller spread."""
        filt = ButterworthFilter(2, 8.0, RATE, channels=1)
        samples = 1.0 + 0.05 * rng.standard_normal(4000)
        out = np.array([filt.step(np.array([s]))[0] for s in samples])
        assert np.std(out[200:]) < 0.5 * np.std(samples[200:])
        assert np.mean(out[200:]) == pytest.approx(1.0, abs=5e-3)

    def test_filter_step_matches_step(self):
        """filter_step advances the filter exactly like step."""
        a = ButterworthFilter(2, 8.0, RATE)
        b = ButterworthFilter(2, 8.0, RATE)
        for k in range(6):
            sample = vec3(float(k), 0.5, -1.0)
            np.testing.assert_array_equal(filter_step(a, sample), b.step(sample))
        assert a.samples == b.samples == 6


class TestIndiState:
    """Test the estimator state and inversion."""

    def test_not_warm_before_five_samples(self, params, indi, state):
        """Estimates are refused until the warm-up samples are in."""
        for i in range(4):
            indi.ingest(_frame(params, i / RATE))
            with pytest.raises(FilterNotWarmError):
                indi.filtered_estimate(state)
        indi.ingest(_frame(params, 4 / RATE))
        assert indi.warm
        indi.filtered_estimate(state)

    def test_repeated_timestamp_is_ignored(self, params, indi):
        """Ingesting the same frame twice filters it once."""
        frame = _frame(params, 0.0)
        indi.ingest(frame)
        indi.ingest(frame)
        assert indi.accel.samples == 1

    def test_recovers_constant_force(self, params, indi, state):
        """A constant residual force is recovered within 1% after warm-up."""
        force = vec3(0.02, -0.01, 0.005)
        for i in range(20):
            estimate = estimate_residual(indi, _frame(params, i / RATE, force=force), state)
        np.testing.assert_allclose(estimate.force, force, rtol=1e-2, atol=1e-6)
        np.testing.assert_allclose(estimate.torque, np.zeros(3), atol=1e-12)
        assert estimate.source == "indi"

    def test_recovers_residual_torque(self, params, indi, state):
        """Rotor torque that leaves the vehicle still is cancelled by a residual torque."""
        applied = vec3(2e-5, -1e-5, 5e-6)
        rpm = mix_to_rotors(params.hover_thrust, applied, params)
        for i in range(10):
            estimate = estimate_residual(indi, _frame(params, i / RATE, rpm=rpm), state)
        np.testing.assert_allclose(estimate.torque, -applied, rtol=1e-6)

    def test_pwm_ignores_motor_lag(self, params, indi, state):
        """The PWM stream reads the commanded speed, the RPM stream the lagged one."""
        lagged = hover_rotor_speeds(params)
        commanded = np.full(4, 1.05 * lagged[0]) / params.rotor_speed_max
        for i in range(10):
            frame = _frame(params, i / RATE, rpm=lagged, pwm=commanded)
            rpm_estimate = estimate_residual(indi, frame, state)
            pwm_estimate = estimate_residual_pwm(indi, frame, state)
        np.testing.assert_allclose(rpm_estimate.force, np.zeros(3), atol=1e-12)
        gap = params.kappa_f * 4 * ((commanded[0] * params.rotor_speed_max) ** 2 - lagged[0] ** 2)
        assert pwm_estimate.force[2] == pytest.approx(-gap, rel=1e-6)
        assert pwm_estimate.source == "indi_pwm"

    def test_recovers_random_injections(self, params, config, state, rng):
        """Twenty random residual wrenches are each recovered within 1%."""
        for _ in range(20):
            force = rng.standard_normal(3)
            force *= rng.uniform(0.001, 0.05) / np.linalg.norm(force)
            torque = rng.standard_normal(3)
            torque *= rng.uniform(1e-6, 2e-4) / np.linalg.norm(torque)
            rpm = mix_to_rotors(params.hover_thrust, -torque, params)
            indi = IndiState(params, config.filter, RATE)
            for i in range(20):
                estimate = estimate_residual(indi, _frame(params, i / RATE, force=force, rpm=rpm), state)
            assert np.linalg.norm(estimate.force - force) <= 1e-2 * np.linalg.norm(force)
            assert np.linalg.norm(estimate.torque - torque) <= 1e-2 * np.linalg.norm(torque)

    def test_raw_matches_filtered_on_constants(self, params, indi, state):
        """With constant inputs the raw and filtered inversions agree."""
        force = vec3(0.0, 0.01, 0.0)
        for i in range(10):
            indi.ingest(_frame(params, i / RATE, force=force))
        filtered, _ = indi.filtered_estimate(state)
        raw, _ = indi.raw_estimate(state)
        np.testing.assert_allclose(raw, filtered, atol=1e-12)

    def test_raw_needs_a_frame(self, indi, state):
        """The raw inversion needs at least one frame."""
        with pytest.raises(FilterNotWarmError):
            indi.raw_estimate(state)

    def test_cable_force_is_removed(self, params, payload_params, config):
        """With a hanging payload the tension is not mistaken for a residual."""
        indi = IndiState(params, config.filter, RATE, payload_params)
        state = VehicleState.at_rest(vec3(0, 0, 1.5))
        payload_position = vec3(0, 0, 1.0)
        for i in range(10):
            frame = _frame(
                params, i / RATE, payload_position=payload_position, extra_mass=payload_params.mass
            )
            estimate = estimate_residual(indi, frame, state)
        np.testing.assert_allclose(estimate.force, np.zeros(3), atol=1e-9)

    def test_warmup_from_config(self, params):
        """The warm-up length comes from the filter section."""
        indi = IndiState(params, FilterConfig(warmup_samples=2), RATE)
        indi.ingest(_frame(params, 0.0))
        assert not indi.warm
        indi.ingest(_frame(params, 1 / RATE))
        assert indi.warm


class TestNaIndi:
    """Test the network-augmented estimator."""

    def test_perfect_prediction(self, params, indi, state):
        """A correct prediction passes through unchanged."""
        force = vec3(0.01, 0.02, -0.01)
        for i in range(10):
            t = i / RATE
            prediction = ResidualEstimate(force.copy(), np.zeros(3), "nn", t)
            estimate = na_indi_residual(indi, _frame(params, t, force=force), state, prediction)
        np.testing.assert_allclose(estimate.force, force, rtol=1e-9)
        assert estimate.source == "na_indi"

    def test_wrong_prediction_is_corrected(self, params, indi, state):
        """INDI makes up the part of a constant residual the network misses."""
        force = vec3(0.01, 0.0, 0.0)
        for i in range(10):
            t = i / RATE
            prediction = ResidualEstimate(vec3(0.004, 0.0, 0.0), np.zeros(3), "nn", t)
            estimate = na_indi_residual(indi, _frame(params, t, force=force), state, prediction)
        np.testing.assert_allclose(estimate.force, force, rtol=1e-9, atol=1e-12)

    def test_zero_prediction_equals_indi(self, params, config, state):
        """With a zero prediction the hybrid reduces to plain INDI."""
        plain = IndiState(params, config.filter, RATE)
        hybrid = IndiState(params, config.filter, RATE)
        force = vec3(0.0, 0.0, 0.02)
        for i in range(10):
            t = i / RATE
            frame = _frame(params, t, force=force)
            expected = estimate_residual(plain, frame, state)
            actual = na_indi_residual(hybrid, frame, state, ResidualEstimate.zero("nn", t))
        np.testing.assert_allclose(actual.force, expected.force, atol=1e-15)

    @pytest.mark.parametrize("share", [0.0, 0.25, 0.5, 0.75, 1.0, 1.5])
    def test_split_invariance(self, params, config, state, share):
        """Whatever share of a constant residual the network predicts, the total recovers it."""
        force = vec3(0.01, -0.02, 0.015)
        torque = vec3(3e-5, -2e-5, 1e-5)
        rpm = mix_to_rotors(params.hover_thrust, -torque, params)
        indi = IndiState(params, config.filter, RATE)
        for i in range(20):
            t = i / RATE
            prediction = ResidualEstimate(share * force, share * torque, "nn", t)
            estimate = na_indi_residual(indi, _frame(params, t, force=force, rpm=rpm), state, prediction)
        np.testing.assert_allclose(estimate.force, force, rtol=1e-2)
        np.testing.assert_allclose(estimate.torque, torque, rtol=1e-2)

    def test_non_finite_prediction(self, params, indi, state):
        """A NaN prediction is rejected."""
        prediction = ResidualEstimate(vec3(np.nan, 0, 0), np.zeros(3), "nn", 0.0)
        with pytest.raises(ValueError):
            na_indi_residual(indi, _frame(params, 0.0), state, prediction)
