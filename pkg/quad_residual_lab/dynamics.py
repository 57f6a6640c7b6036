"""Ground-truth physics: rigid body, rotors, taut cable payload and sensors."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from .config import NoiseConfig, PayloadConfig, ResidualConfig, ScenarioConfig, VehicleConfig
from .mathcore import E_Z, Mat3, Vec3, hat, orthonormalize

logger = logging.getLogger(__name__)

TAUT_TOLERANCE = 1e-6

Vec4 = NDArray[np.float64]


class SimulationDivergedError(RuntimeError):
    """Raised when integration produces a non-finite state."""


def x_configuration_allocation(arm_length: float, torque_ratio: float) -> NDArray[np.float64]:
    """
    Map per-rotor forces to (f_u, tau_x, tau_y, tau_z) for an X quadrotor.

    Rotor order: front-right, back-right, back-left, front-left; rotors 1 and 3
    spin so that their reaction torque is negative about body z.
    """
    d = arm_length / np.sqrt(2.0)
    k = torque_ratio
    return np.array(
        [
            [1.0, 1.0, 1.0, 1.0],
            [-d, -d, d, d],
            [-d, d, d, -d],
            [-k, k, -k, k],
        ]
    )


@dataclass(frozen=True, eq=False)
class VehicleParams:
    """Physical constants of the multirotor."""

    mass: float
    inertia: Mat3
    kappa_f: float
    arm_length: float
    torque_ratio: float
    rotor_speed_min: float
    rotor_speed_max: float
    gravity: float
    motor_time_constant: float
    actuation: NDArray[np.float64]
    allocation: NDArray[np.float64]

    @classmethod
    def from_config(cls, config: VehicleConfig) -> VehicleParams:
        """Derive B0 (and its inverse) from the vehicle section."""
        if config.actuation_matrix is not None:
            actuation = np.array(config.actuation_matrix, dtype=np.float64)
            if abs(np.linalg.det(actuation)) < 1e-300:
                raise ValueError("actuation_matrix must be invertible")
            allocation = np.linalg.inv(actuation)
        else:
            allocation = x_configuration_allocation(config.arm_length, config.torque_ratio)
            actuation = np.linalg.inv(allocation)
        return cls(
            mass=config.mass,
            inertia=np.diag(np.array(config.inertia, dtype=np.float64)),
            kappa_f=config.kappa_f,
            arm_length=config.arm_length,
            torque_ratio=config.torque_ratio,
            rotor_speed_min=config.rotor_speed_min,
            rotor_speed_max=config.rotor_speed_max,
            gravity=config.gravity,
            motor_time_constant=config.motor_time_constant,
            actuation=actuation,
            allocation=allocation,
        )

    @property
    def hover_thrust(self) -> float:
        """Thrust that balances gravity without payload."""
        return self.mass * self.gravity

    @property
    def max_rotor_force(self) -> float:
        """Force of one rotor at full speed."""
        return self.kappa_f * self.rotor_speed_max**2


@dataclass(frozen=True)
class PayloadParams:
    """Point-mass payload on an inextensible massless cable."""

    mass: float
    cable_length: float

    @classmethod
    def from_config(cls, config: PayloadConfig) -> PayloadParams:
        """Copy the payload section."""
        return cls(mass=config.mass, cable_length=config.cable_length)


@dataclass
class VehicleState:
    """Position, velocity (world), attitude body->world and body rates."""

    position: Vec3
    velocity: Vec3
    rotation: Mat3
    angular_velocity: Vec3

    @classmethod
    def at_rest(cls, position: Optional[Vec3] = None, rotation: Optional[Mat3] = None) -> VehicleState:
        """Vehicle at rest at the given pose."""
        return cls(
            position=np.zeros(3) if position is None else np.array(position, dtype=np.float64),
            velocity=np.zeros(3),
            rotation=np.eye(3) if rotation is None else np.array(rotation, dtype=np.float64),
            angular_velocity=np.zeros(3),
        )

    def copy(self) -> VehicleState:
        """Deep copy."""
        return VehicleState(
            self.position.copy(),
            self.velocity.copy(),
            self.rotation.copy(),
            self.angular_velocity.copy(),
        )

    def is_finite(self) -> bool:
        """True if every component is finite."""
        return bool(
            np.all(np.isfinite(self.position))
            and np.all(np.isfinite(self.velocity))
            and np.all(np.isfinite(self.rotation))
            and np.all(np.isfinite(self.angular_velocity))
        )


@dataclass
class PayloadState:
    """Payload position/velocity with the derived cable direction and tension."""

    position: Vec3
    velocity: Vec3
    direction: Vec3
    tension: float

    @classmethod
    def hanging_below(cls, vehicle: VehicleState, params: PayloadParams, gravity: float) -> PayloadState:
        """Payload at rest one cable length under the vehicle."""
        direction = -E_Z.copy()
        return cls(
            position=vehicle.position + params.cable_length * direction,
            velocity=vehicle.velocity.copy(),
            direction=direction,
            tension=params.mass * gravity,
        )

    def copy(self) -> PayloadState:
        """Deep copy."""
        return PayloadState(
            self.position.copy(), self.velocity.copy(), self.direction.copy(), self.tension
        )


@dataclass
class SensorFrame:
    """One sample of the onboard sensors (plus the tracked payload position)."""

    accel: Vec3
    gyro: Vec3
    rpm: Vec4
    pwm: Vec4
    timestamp: float
    payload_position: Optional[Vec3] = None


@dataclass(frozen=True, eq=False)
class ResidualModel:
    """Ground-truth unmodelled force/torque injected into the simulation."""

    kind: str = "none"
    drag: Vec3 = field(default_factory=lambda: np.zeros(3))
    torque_drag: Vec3 = field(default_factory=lambda: np.zeros(3))
    force_bias: Vec3 = field(default_factory=lambda: np.zeros(3))
    torque_bias: Vec3 = field(default_factory=lambda: np.zeros(3))
    script_times: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    script_values: NDArray[np.float64] = field(default_factory=lambda: np.zeros((0, 6)))

    @classmethod
    def from_config(cls, config: ResidualConfig) -> ResidualModel:
        """Build from the residual section."""
        times = np.array(config.script_times, dtype=np.float64)
        values = np.array(config.script_values, dtype=np.float64).reshape(-1, 6)
        if config.kind == "scripted":
            if len(times) == 0 or len(times) != len(values):
                raise ValueError("scripted residual needs matching script_times/script_values")
            if np.any(np.diff(times) <= 0):
                raise ValueError("script_times must be strictly increasing")
        return cls(
            kind=config.kind,
            drag=np.array(config.drag, dtype=np.float64),
            torque_drag=np.array(config.torque_drag, dtype=np.float64),
            force_bias=np.array(config.force_bias, dtype=np.float64),
            torque_bias=np.array(config.torque_bias, dtype=np.float64),
            script_times=times,
            script_values=values,
        )

    @classmethod
    def constant(cls, force: Vec3, torque: Optional[Vec3] = None) -> ResidualModel:
        """Fixed injected residual."""
        return cls(
            kind="constant",
            force_bias=np.array(force, dtype=np.float64),
            torque_bias=np.zeros(3) if torque is None else np.array(torque, dtype=np.float64),
        )


def motor_forces(rotor_speeds: Vec4, params: VehicleParams) -> Vec4:
    """Per-rotor thrust f_i = kappa_F * omega_i^2."""
    rotor_speeds = np.asarray(rotor_speeds, dtype=np.float64)
    return params.kappa_f * rotor_speeds * rotor_speeds


def wrench_from_rotor_forces(forces: Vec4, params: VehicleParams) -> Tuple[float, Vec3]:
    """Apply B0^-1: per-rotor forces to collective thrust and body torque."""
    wrench = params.allocation @ np.asarray(forces, dtype=np.float64)
    return float(wrench[0]), wrench[1:].copy()


def true_residual(model: ResidualModel, state: VehicleState, t: float) -> Tuple[Vec3, Vec3]:
    """Evaluate the ground-truth (f_a, tau_a) at a state and time."""
    if model.kind == "none":
        return np.zeros(3), np.zeros(3)

    if model.kind == "scripted":
        values = np.array(
            [np.interp(t, model.script_times, model.script_values[:, i]) for i in range(6)]
        )
        return values[:3], values[3:]

    force = model.force_bias.copy()
    torque = model.torque_bias.copy()
    rotation = state.rotation
    omega = state.angular_velocity
    if model.kind == "linear_drag":
        body_velocity = rotation.T @ state.velocity
        force = force - rotation @ (model.drag * body_velocity)
        torque = torque - model.torque_drag * omega
    elif model.kind == "quadratic_drag":
        body_velocity = rotation.T @ state.velocity
        force = force - rotation @ (model.drag * body_velocity * np.abs(body_velocity))
        torque = torque - model.torque_drag * omega * np.abs(omega)
    return force, torque


# Flat state layout: p(3) v(3) R(9, row-major) w(3) [payload p(3) v(3)]
_P, _V, _R, _W, _PP, _VP = (
    slice(0, 3),
    slice(3, 6),
    slice(6, 15),
    slice(15, 18),
    slice(18, 21),
    slice(21, 24),
)


def _pack(vehicle: VehicleState, payload: Optional[PayloadState] = None) -> NDArray[np.float64]:
    parts = [vehicle.position, vehicle.velocity, vehicle.rotation.reshape(9), vehicle.angular_velocity]
    if payload is not None:
        parts += [payload.position, payload.velocity]
    return np.concatenate(parts)


def _unpack_vehicle(x: NDArray[np.float64]) -> VehicleState:
    return VehicleState(x[_P].copy(), x[_V].copy(), x[_R].reshape(3, 3).copy(), x[_W].copy())


def _rk4(
    f: Callable[[float, NDArray[np.float64]], NDArray[np.float64]],
    t: float,
    x: NDArray[np.float64],
    dt: float,
) -> NDArray[np.float64]:
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rigid_body_rates(
    x: NDArray[np.float64],
    thrust: float,
    torque: Vec3,
    f_a: Vec3,
    tau_a: Vec3,
    external: Vec3,
    params: VehicleParams,
) -> NDArray[np.float64]:
    rotation = x[_R].reshape(3, 3)
    omega = x[_W]
    inertia = params.inertia
    accel = (thrust * rotation[:, 2] - params.hover_thrust * E_Z + f_a + external) / params.mass
    rotation_rate = rotation @ hat(omega)
    # J w_dot = J w x w + tau_u + tau_a
    omega_rate = np.linalg.solve(inertia, np.cross(inertia @ omega, omega) + torque + tau_a)
    return np.concatenate([x[_V], accel, rotation_rate.reshape(9), omega_rate])


def _checked(x: NDArray[np.float64], what: str) -> NDArray[np.float64]:
    if not np.all(np.isfinite(x)):
        raise SimulationDivergedError(f"Non-finite {what} state after integration step")
    return x


def step_multirotor_wrench(
    state: VehicleState,
    thrust: float,
    torque: Vec3,
    model: ResidualModel,
    dt: float,
    params: VehicleParams,
    t: float = 0.0,
) -> VehicleState:
    """RK4 step of the rigid body under a given collective thrust and torque."""
    if not 0.0 < dt <= 0.01:
        raise ValueError(f"dt must lie in (0, 0.01], got {dt}")

    def rates(tau: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
        f_a, tau_a = true_residual(model, _unpack_vehicle(x), tau)
        return _rigid_body_rates(x, thrust, torque, f_a, tau_a, np.zeros(3), params)

    x = _checked(_rk4(rates, t, _pack(state), dt), "vehicle")
    result = _unpack_vehicle(x)
    result.rotation = orthonormalize(result.rotation)
    return result


def step_multirotor(
    state: VehicleState,
    rotor_speeds: Vec4,
    model: ResidualModel,
    dt: float,
    params: VehicleParams,
    t: float = 0.0,
) -> VehicleState:
    """Advance the multirotor one step with the rotors held at the given speeds."""
    thrust, torque = wrench_from_rotor_forces(motor_forces(rotor_speeds, params), params)
    return step_multirotor_wrench(state, thrust, torque, model, dt, params, t)


def cable_tension(
    vehicle: VehicleState,
    payload_position: Vec3,
    payload_velocity: Vec3,
    vehicle_force: Vec3,
    params: VehicleParams,
    payload_params: PayloadParams,
) -> Tuple[float, Vec3]:
    """
    Tension that keeps the cable length constant, and the cable direction.

    vehicle_force is every non-gravity, non-cable force on the vehicle
    (thrust plus residual).
    """
    r = payload_position - vehicle.position
    length = float(np.linalg.norm(r))
    q = r / length
    r_dot = payload_velocity - vehicle.velocity
    m, m_p = params.mass, payload_params.mass
    tension = m_p / (m + m_p) * (m * float(r_dot @ r_dot) / length - float(q @ vehicle_force))
    return tension, q


def _project_taut(
    x: NDArray[np.float64], params: VehicleParams, payload_params: PayloadParams
) -> NDArray[np.float64]:
    """Restore |p_p - p| = l and zero radial relative speed, preserving momentum."""
    m, m_p = params.mass, payload_params.mass
    total = m + m_p
    p, v, pp, vp = x[_P], x[_V], x[_PP], x[_VP]
    center = (m * p + m_p * pp) / total
    center_velocity = (m * v + m_p * vp) / total
    r = pp - p
    q = r / np.linalg.norm(r)
    r = payload_params.cable_length * q
    r_dot = vp - v
    r_dot = r_dot - float(r_dot @ q) * q
    x = x.copy()
    x[_P] = center - (m_p / total) * r
    x[_PP] = center + (m / total) * r
    x[_V] = center_velocity - (m_p / total) * r_dot
    x[_VP] = center_velocity + (m / total) * r_dot
    return x


def step_payload_system(
    vehicle: VehicleState,
    payload: PayloadState,
    rotor_speeds: Vec4,
    model: ResidualModel,
    dt: float,
    params: VehicleParams,
    payload_params: PayloadParams,
    t: float = 0.0,
) -> Tuple[VehicleState, PayloadState]:
    """Advance vehicle and payload one step through the taut-cable coupling."""
    if not 0.0 < dt <= 0.01:
        raise ValueError(f"dt must lie in (0, 0.01], got {dt}")

    thrust, torque = wrench_from_rotor_forces(motor_forces(rotor_speeds, params), params)
    m_p, g = payload_params.mass, params.gravity

    def coupling(x: NDArray[np.float64], tau: float) -> Tuple[float, Vec3, Vec3, Vec3]:
        state = _unpack_vehicle(x)
        f_a, tau_a = true_residual(model, state, tau)
        tension, q = cable_tension(
            state, x[_PP], x[_VP], thrust * state.rotation[:, 2] + f_a, params, payload_params
        )
        return tension, q, f_a, tau_a

    def rates(taut: bool) -> Callable[[float, NDArray[np.float64]], NDArray[np.float64]]:
        def f(tau: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
            tension, q, f_a, tau_a = coupling(x, tau)
            cable = tension * q if taut else np.zeros(3)
            body = _rigid_body_rates(x, thrust, torque, f_a, tau_a, cable, params)
            payload_accel = (-cable - m_p * g * E_Z) / m_p
            return np.concatenate([body, x[_VP], payload_accel])

        return f

    x = _pack(vehicle, payload)
    distance = float(np.linalg.norm(payload.position - vehicle.position))
    entry_tension, _, _, _ = coupling(x, t)
    taut = distance >= payload_params.cable_length - TAUT_TOLERANCE and entry_tension >= 0.0
    if not taut:
        logger.warning(f"Slack cable at t={t:.4f}s (tension {entry_tension:.3e} N)")

    x = _checked(_rk4(rates(taut), t, x, dt), "payload")
    distance = float(np.linalg.norm(x[_PP] - x[_P]))
    if taut or distance > payload_params.cable_length:
        x = _project_taut(x, params, payload_params)

    new_vehicle = _unpack_vehicle(x)
    new_vehicle.rotation = orthonormalize(new_vehicle.rotation)
    f_a, _ = true_residual(model, new_vehicle, t + dt)
    tension, q = cable_tension(
        new_vehicle, x[_PP], x[_VP], thrust * new_vehicle.rotation[:, 2] + f_a, params, payload_params
    )
    new_payload = PayloadState(x[_PP].copy(), x[_VP].copy(), q, max(tension, 0.0))
    return new_vehicle, new_payload


def vehicle_acceleration(
    state: VehicleState,
    rotor_speeds: Vec4,
    model: ResidualModel,
    params: VehicleParams,
    t: float,
    payload: Optional[PayloadState] = None,
    payload_params: Optional[PayloadParams] = None,
) -> Vec3:
    """Instantaneous world-frame acceleration of the vehicle."""
    thrust, _ = wrench_from_rotor_forces(motor_forces(rotor_speeds, params), params)
    f_a, _ = true_residual(model, state, t)
    force = thrust * state.rotation[:, 2] + f_a
    if payload is not None and payload_params is not None:
        tension, q = cable_tension(
            state, payload.position, payload.velocity, force, params, payload_params
        )
        force = force + max(tension, 0.0) * q
    return (force - params.hover_thrust * E_Z) / params.mass


class MotorBank:
    """First-order lag between commanded and actual rotor speeds."""

    def __init__(self, params: VehicleParams):
        """Start with all rotors stopped."""
        self.params = params
        self.commanded = np.zeros(4)
        self.actual = np.zeros(4)

    def reset(self, speeds: Vec4) -> None:
        """Set commanded and actual speeds to the same value."""
        self.commanded = np.array(speeds, dtype=np.float64)
        self.actual = self.commanded.copy()

    def command(self, speeds: Vec4) -> None:
        """Set a new speed command (clamped to the rotor limits)."""
        self.commanded = np.clip(
            np.asarray(speeds, dtype=np.float64),
            self.params.rotor_speed_min,
            self.params.rotor_speed_max,
        )

    def advance(self, dt: float) -> None:
        """Exact discretisation of tau_m * w_dot = w_cmd - w."""
        tau = self.params.motor_time_constant
        if tau <= 0.0:
            self.actual = self.commanded.copy()
            return
        alpha = 1.0 - np.exp(-dt / tau)
        self.actual = self.actual + alpha * (self.commanded - self.actual)

    @property
    def pwm(self) -> Vec4:
        """Commanded speed normalised to [0, 1]."""
        return np.clip(self.commanded / self.params.rotor_speed_max, 0.0, 1.0)


class MultirotorEngine:
    """Owns the simulated vehicle, optional payload, motors and sensor RNG."""

    def __init__(self, config: ScenarioConfig, seed: int = 0, with_payload: bool = False):
        """
        Initialize the simulation engine.

        Args:
            config: Scenario configuration
            seed: Seed of the sensor-noise generator
            with_payload: Simulate the cable-suspended payload
        """
        self.config = config
        self.params = VehicleParams.from_config(config.vehicle)
        self.payload_params = PayloadParams.from_config(config.payload)
        self.residual_model = ResidualModel.from_config(config.residual)
        self.noise: NoiseConfig = config.noise
        self.dt = config.timing.physics_dt
        self.with_payload = with_payload
        self.rng = np.random.default_rng(seed)
        self.motors = MotorBank(self.params)
        self.time = 0.0
        self.state = VehicleState.at_rest()
        self.payload: Optional[PayloadState] = None

        logger.info(
            f"Engine created (payload={with_payload}, residual={self.residual_model.kind}, seed={seed})"
        )

    def reset(
        self,
        state: VehicleState,
        payload: Optional[PayloadState] = None,
        rotor_speeds: Optional[Vec4] = None,
        time: float = 0.0,
    ) -> None:
        """Place the vehicle (and payload) and spin the rotors up instantly."""
        self.state = state.copy()
        if self.with_payload:
            self.payload = (
                payload.copy()
                if payload is not None
                else PayloadState.hanging_below(state, self.payload_params, self.params.gravity)
            )
        self.motors.reset(np.zeros(4) if rotor_speeds is None else rotor_speeds)
        self.time = time

    def command(self, rotor_speeds: Vec4) -> None:
        """Send a rotor speed command."""
        self.motors.command(rotor_speeds)

    def step(self) -> None:
        """One physics step with the current actual rotor speeds, then motor lag."""
        speeds = self.motors.actual
        if self.with_payload and self.payload is not None:
            self.state, self.payload = step_payload_system(
                self.state,
                self.payload,
                speeds,
                self.residual_model,
                self.dt,
                self.params,
                self.payload_params,
                self.time,
            )
        else:
            self.state = step_multirotor(
                self.state, speeds, self.residual_model, self.dt, self.params, self.time
            )
        self.motors.advance(self.dt)
        self.time += self.dt

    def true_residual(self) -> Tuple[Vec3, Vec3]:
        """Ground-truth residual at the current state."""
        return true_residual(self.residual_model, self.state, self.time)

    def sense(self) -> SensorFrame:
        """Sample accelerometer, gyroscope, rotor speeds and PWM."""
        return sense(
            self.state,
            self.payload,
            self.motors,
            self.residual_model,
            self.noise,
            self.time,
            self.params,
            self.payload_params,
            self.rng,
        )


def sense(
    state: VehicleState,
    payload: Optional[PayloadState],
    motors: MotorBank,
    model: ResidualModel,
    noise: NoiseConfig,
    t: float,
    params: VehicleParams,
    payload_params: Optional[PayloadParams] = None,
    rng: Optional[np.random.Generator] = None,
) -> SensorFrame:
    """Specific force, body rates, lagged rotor speeds and commanded PWM."""
    accel_world = vehicle_acceleration(
        state, motors.actual, model, params, t, payload, payload_params
    )
    accel = state.rotation.T @ (accel_world + params.gravity * E_Z)
    gyro = state.angular_velocity.copy()
    rpm = motors.actual.copy()
    payload_position = None if payload is None else payload.position.copy()

    if rng is not None:
        if noise.accel_std > 0:
            accel = accel + rng.normal(0.0, noise.accel_std, 3)
        if noise.gyro_std > 0:
            gyro = gyro + rng.normal(0.0, noise.gyro_std, 3)
        if noise.rpm_std > 0:
            rpm = rpm + rng.normal(0.0, noise.rpm_std, 4)
        if payload_position is not None and noise.payload_position_std > 0:
            payload_position = payload_position + rng.normal(0.0, noise.payload_position_std, 3)

    return SensorFrame(
        accel=accel,
        gyro=gyro,
        rpm=rpm,
        pwm=motors.pwm,
        timestamp=t,
        payload_position=payload_position,
    )
