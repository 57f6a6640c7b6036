"""Online residual estimation by incremental inversion of filtered sensor data."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.signal import butter, lfilter_zi

from .config import FilterConfig
from .dynamics import (
    PayloadParams,
    SensorFrame,
    VehicleParams,
    VehicleState,
    motor_forces,
    wrench_from_rotor_forces,
)
from .mathcore import E_Z, Vec3

logger = logging.getLogger(__name__)


class FilterNotWarmError(RuntimeError):
    """Raised when an estimate is requested before the filters have settled in."""


@dataclass
class ResidualEstimate:
    """Residual force (world) and torque (body) with the stream it came from."""

    force: Vec3 = field(default_factory=lambda: np.zeros(3))
    torque: Vec3 = field(default_factory=lambda: np.zeros(3))
    source: str = "none"
    timestamp: float = 0.0

    @classmethod
    def zero(cls, source: str = "none", timestamp: float = 0.0) -> ResidualEstimate:
        """Zero residual."""
        return cls(np.zeros(3), np.zeros(3), source, timestamp)

    @classmethod
    def from_vector(cls, values: NDArray[np.float64], source: str, timestamp: float = 0.0) -> ResidualEstimate:
        """Build from a stacked (f_a, tau_a) 6-vector."""
        values = np.asarray(values, dtype=np.float64)
        return cls(values[:3].copy(), values[3:6].copy(), source, timestamp)

    def as_vector(self) -> NDArray[np.float64]:
        """Stack into (f_a, tau_a)."""
        return np.concatenate([self.force, self.torque])

    def is_finite(self) -> bool:
        """True if force and torque are finite."""
        return bool(np.all(np.isfinite(self.force)) and np.all(np.isfinite(self.torque)))


class ButterworthFilter:
    """Multi-channel Butterworth low-pass in transposed direct form II."""

    def __init__(self, order: int, cutoff_hz: float, sample_rate_hz: float, channels: int = 3):
        """
        Initialize the filter.

        Args:
            order: Filter order
            cutoff_hz: -3 dB frequency
            sample_rate_hz: Rate at which step() is called
            channels: Number of independent channels
        """
        if not 0.0 < cutoff_hz < 0.5 * sample_rate_hz:
            raise ValueError(
                f"cutoff {cutoff_hz} Hz must lie below Nyquist ({0.5 * sample_rate_hz} Hz)"
            )
        self.order = order
        self.cutoff_hz = cutoff_hz
        self.sample_rate_hz = sample_rate_hz
        self.channels = channels
        b, a = butter(order, cutoff_hz, btype="low", fs=sample_rate_hz)
        self.b = np.asarray(b, dtype=np.float64)
        self.a = np.asarray(a, dtype=np.float64)
        self._unit_state = np.asarray(lfilter_zi(self.b, self.a), dtype=np.float64)
        self.state: Optional[NDArray[np.float64]] = None
        self.samples = 0

    @classmethod
    def from_config(cls, config: FilterConfig, sample_rate_hz: float, channels: int = 3) -> ButterworthFilter:
        """Filter with the configured order and cutoff."""
        return cls(config.order, config.cutoff_hz, sample_rate_hz, channels)

    @property
    def dc_gain(self) -> float:
        """Gain at zero frequency."""
        return float(np.sum(self.b) / np.sum(self.a))

    def reset(self) -> None:
        """Forget all history."""
        self.state = None
        self.samples = 0

    def step(self, sample: NDArray[np.float64]) -> NDArray[np.float64]:
        """Filter one sample per channel."""
        x = np.asarray(sample, dtype=np.float64).reshape(self.channels)
        if self.state is None:
            # steady state for a constant input equal to the first sample
            self.state = np.outer(self._unit_state, x)
        b, a, z = self.b, self.a, self.state
        y = b[0] * x + z[0]
        for i in range(self.order - 1):
            z[i] = b[i + 1] * x + z[i + 1] - a[i + 1] * y
        z[self.order - 1] = b[self.order] * x - a[self.order] * y
        self.samples += 1
        return y


def filter_step(filt: ButterworthFilter, sample: NDArray[np.float64]) -> NDArray[np.float64]:
    """Advance a filter by one sample."""
    return filt.step(sample)


def wrench_from_rpm(rpm: NDArray[np.float64], params: VehicleParams) -> NDArray[np.float64]:
    """(f_u, tau_u) from measured rotor speeds."""
    thrust, torque = wrench_from_rotor_forces(motor_forces(rpm, params), params)
    return np.concatenate([[thrust], torque])


def wrench_from_pwm(pwm: NDArray[np.float64], params: VehicleParams) -> NDArray[np.float64]:
    """(f_u, tau_u) from commanded PWM through the static motor map (no lag)."""
    speeds = np.clip(np.asarray(pwm, dtype=np.float64), 0.0, 1.0) * params.rotor_speed_max
    return wrench_from_rpm(speeds, params)


class IndiState:
    """Filters and differencing memory of one vehicle's residual estimator."""

    def __init__(
        self,
        params: VehicleParams,
        filter_config: FilterConfig,
        sample_rate_hz: float,
        payload_params: Optional[PayloadParams] = None,
    ):
        """
        Initialize the estimator state.

        Args:
            params: Nominal vehicle model used by the inversion
            filter_config: Butterworth order, cutoff and warm-up length
            sample_rate_hz: Rate at which frames arrive
            payload_params: Enables the cable-force term when given
        """
        self.params = params
        self.payload_params = payload_params
        self.dt = 1.0 / sample_rate_hz
        self.warmup = filter_config.warmup_samples

        def make(channels: int) -> ButterworthFilter:
            return ButterworthFilter.from_config(filter_config, sample_rate_hz, channels)

        self.accel = make(3)
        self.gyro = make(3)
        self.rpm_wrench = make(4)
        self.pwm_wrench = make(4)
        self.payload_position = make(3)
        self.network = make(6)

        self.timestamp: Optional[float] = None
        self.network_timestamp: Optional[float] = None
        self.accel_f = np.zeros(3)
        self.gyro_f = np.zeros(3)
        self.gyro_f_prev: Optional[Vec3] = None
        self.omega_dot = np.zeros(3)
        self.rpm_wrench_f = np.zeros(4)
        self.pwm_wrench_f = np.zeros(4)
        self.payload_history: Tuple[NDArray[np.float64], ...] = ()
        self.payload_accel = np.zeros(3)
        self.network_f = np.zeros(6)

        self.raw_frame: Optional[SensorFrame] = None
        self.raw_gyro_prev: Optional[Vec3] = None

    @property
    def warm(self) -> bool:
        """True once every channel has seen the warm-up number of samples."""
        return self.accel.samples >= self.warmup

    def ingest(self, frame: SensorFrame) -> None:
        """Filter a new frame; repeated calls with the same timestamp are ignored."""
        if self.timestamp is not None and frame.timestamp == self.timestamp:
            return
        if self.raw_frame is not None:
            self.raw_gyro_prev = self.raw_frame.gyro.copy()
        self.raw_frame = frame
        self.timestamp = frame.timestamp

        self.accel_f = self.accel.step(frame.accel)
        gyro_f = self.gyro.step(frame.gyro)
        self.omega_dot = (
            np.zeros(3) if self.gyro_f_prev is None else (gyro_f - self.gyro_f_prev) / self.dt
        )
        self.gyro_f_prev = gyro_f
        self.gyro_f = gyro_f
        self.rpm_wrench_f = self.rpm_wrench.step(wrench_from_rpm(frame.rpm, self.params))
        self.pwm_wrench_f = self.pwm_wrench.step(wrench_from_pwm(frame.pwm, self.params))

        if frame.payload_position is not None:
            filtered = self.payload_position.step(frame.payload_position)
            self.payload_history = (self.payload_history + (filtered,))[-3:]
            if len(self.payload_history) == 3:
                p2, p1, p0 = self.payload_history
                self.payload_accel = (p0 - 2.0 * p1 + p2) / self.dt**2

    def ingest_network(self, prediction: ResidualEstimate) -> NDArray[np.float64]:
        """Filter the network prediction through a copy of the sensor filter."""
        if self.network_timestamp is None or prediction.timestamp != self.network_timestamp:
            self.network_f = self.network.step(prediction.as_vector())
            self.network_timestamp = prediction.timestamp
        return self.network_f

    def _require_warm(self) -> None:
        if not self.warm:
            raise FilterNotWarmError(
                f"Estimator has seen {self.accel.samples} samples, needs {self.warmup}"
            )

    def cable_force(
        self, state: VehicleState, payload_position: Optional[Vec3], payload_accel: Vec3
    ) -> Vec3:
        """T q from the payload balance m_p a_p = -T q - m_p g e_z."""
        if self.payload_params is None or payload_position is None:
            return np.zeros(3)
        r = payload_position - state.position
        q = r / np.linalg.norm(r)
        tension = -self.payload_params.mass * float(q @ (payload_accel + self.params.gravity * E_Z))
        return tension * q

    def invert(
        self,
        state: VehicleState,
        specific_force: Vec3,
        omega: Vec3,
        omega_dot: Vec3,
        wrench: NDArray[np.float64],
        cable_force: Vec3,
    ) -> Tuple[Vec3, Vec3]:
        """Residual (f_a, tau_a) from measured motion and actuator wrench."""
        params = self.params
        rotation = state.rotation
        thrust, torque = float(wrench[0]), wrench[1:]
        force = params.mass * rotation @ specific_force - thrust * rotation[:, 2] - cable_force
        inertia = params.inertia
        residual_torque = inertia @ omega_dot - np.cross(inertia @ omega, omega) - torque
        return force, residual_torque

    def filtered_estimate(self, state: VehicleState, use_pwm: bool = False) -> Tuple[Vec3, Vec3]:
        """Inversion on the filtered channels."""
        self._require_warm()
        frame = self.raw_frame
        cable = self.cable_force(
            state, None if frame is None else frame.payload_position, self.payload_accel
        )
        wrench = self.pwm_wrench_f if use_pwm else self.rpm_wrench_f
        return self.invert(state, self.accel_f, self.gyro_f, self.omega_dot, wrench, cable)

    def raw_estimate(self, state: VehicleState) -> Tuple[Vec3, Vec3]:
        """Inversion on unfiltered measurements (for comparison only)."""
        frame = self.raw_frame
        if frame is None:
            raise FilterNotWarmError("No frame has been ingested")
        omega_dot = (
            np.zeros(3)
            if self.raw_gyro_prev is None
            else (frame.gyro - self.raw_gyro_prev) / self.dt
        )
        cable = self.cable_force(state, frame.payload_position, self.payload_accel)
        return self.invert(
            state, frame.accel, frame.gyro, omega_dot, wrench_from_rpm(frame.rpm, self.params), cable
        )


def estimate_residual(
    indi: IndiState,
    frame: SensorFrame,
    state: VehicleState,
) -> ResidualEstimate:
    """INDI residual with the actuator wrench taken from measured rotor speeds."""
    indi.ingest(frame)
    force, torque = indi.filtered_estimate(state)
    return ResidualEstimate(force, torque, "indi", frame.timestamp)


def estimate_residual_pwm(
    indi: IndiState,
    frame: SensorFrame,
    state: VehicleState,
) -> ResidualEstimate:
    """INDI residual with the actuator wrench taken from commanded PWM."""
    indi.ingest(frame)
    force, torque = indi.filtered_estimate(state, use_pwm=True)
    return ResidualEstimate(force, torque, "indi_pwm", frame.timestamp)


def na_indi_residual(
    indi: IndiState,
    frame: SensorFrame,
    state: VehicleState,
    prediction: ResidualEstimate,
) -> ResidualEstimate:
    """
    Network prediction plus the INDI estimate of what it leaves unexplained.

    The prediction is removed after passing through the same filter as the
    measurements, so a constant split between network and remainder does not
    change the total once the filters settle.
    """
    if not prediction.is_finite():
        raise ValueError("Network prediction is not finite")
    indi.ingest(frame)
    filtered_prediction = indi.ingest_network(prediction)
    force, torque = indi.filtered_estimate(state)
    remainder = np.concatenate([force, torque]) - filtered_prediction
    total = prediction.as_vector() + remainder
    return ResidualEstimate.from_vector(total, "na_indi", frame.timestamp)
