"""Shared fixtures."""

import numpy as np
import pytest

from quad_residual_lab.config import Profiles, ScenarioConfig
from quad_residual_lab.dynamics import PayloadParams, VehicleParams
from quad_residual_lab.flight_log import FlightLogRecorder


@pytest.fixture
def config() -> ScenarioConfig:
    """Default scenario: exact model, noiseless sensors."""
    return Profiles.default()


@pytest.fixture
def params(config) -> VehicleParams:
    """Vehicle parameters of the default scenario."""
    return VehicleParams.from_config(config.vehicle)


@pytest.fixture
def payload_params(config) -> PayloadParams:
    """5 g payload on a 0.5 m cable."""
    return PayloadParams.from_config(config.payload)


@pytest.fixture
def short_config() -> ScenarioConfig:
    """Default scenario with short test shapes for closed-loop tests."""
    return Profiles.combine(
        Profiles.default(),
        {
            "trajectories": {
                "shapes": {
                    "figure8": {"size": (1.0, 0.6, 0.0), "speed": 1.7, "payload_speed": 1.2, "duration": 6.0},
                    "circle": {"size": (0.8, 0.0, 0.0), "speed": 1.7, "payload_speed": 1.0, "duration": 5.0},
                    "helix": {"size": (0.6, 0.3, 0.0), "speed": 1.6, "payload_speed": 1.0, "duration": 5.0},
                }
            }
        },
    )


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for randomized checks."""
    return np.random.default_rng(1234)


@pytest.fixture
def make_log():
    """Factory for synthetic flight logs with a sinusoidal residual in every stream."""

    def factory(ticks=500, dt=0.002, streams=("true", "indi"), noise=0.0, seed=0, payload=False):
        gen = np.random.default_rng(seed)
        recorder = FlightLogRecorder({"trajectory": "synthetic"})
        for i in range(ticks):
            t = i * dt
            wave = np.array([np.sin(t), np.cos(t), 0.5 * np.sin(2 * t), 1e-4 * t, 0.0, -1e-4])
            position = np.array([0.1 * t, 0.0, 1.0])
            extra = {}
            if payload:
                extra = {"payload_position": position - np.array([0, 0, 0.5]), "payload_velocity": np.zeros(3)}
            recorder.record(
                residuals={s: wave + noise * gen.standard_normal(6) for s in streams},
                time=t,
                position=position,
                velocity=np.array([0.1, 0.0, 0.0]),
                rotation=np.eye(3),
                angular_velocity=np.zeros(3),
                accel=np.array([0.0, 0.0, 9.81]),
                gyro=np.zeros(3),
                rpm=np.full(4, 1900.0),
                pwm=np.full(4, 0.7) + 0.01 * np.sin(t),
                accel_filtered=np.array([0.01 * np.sin(t), 0.0, 9.81]),
                thrust=0.34,
                torque=np.zeros(3),
                rotor_command=np.full(4, 1900.0),
                reference=np.array([0.1 * t, 0.0, 1.0]),
                **extra,
            )
        return recorder.finish()

    return factory
