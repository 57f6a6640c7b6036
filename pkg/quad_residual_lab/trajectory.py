"""Reference trajectories and their differential-flatness expansion."""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.polynomial import Polynomial
from numpy.typing import NDArray

from .config import CollectionConfig, ScenarioConfig
from .mathcore import E_Z, Mat3, Vec3, skew_part, vee

logger = logging.getLogger(__name__)

SINGULAR_THRUST = 1e-6

# 0 -> 1 on [0, 1] with first three derivatives zero at both ends. It is also
# the normalised rest-to-rest minimum-snap profile; its peak slope is 35/16.
SMOOTHSTEP = Polynomial([0.0, 0.0, 0.0, 0.0, 35.0, -84.0, 70.0, -20.0])
SMOOTHSTEP_PEAK_SLOPE = 35.0 / 16.0
# Peak |s''| of SMOOTHSTEP, reached at x = (5 - sqrt 5) / 10.
SMOOTHSTEP_PEAK_ACCEL = 84.0 / (5.0 * np.sqrt(5.0))

TRAJECTORY_COLUMNS = [
    "t",
    "px", "py", "pz",
    "vx", "vy", "vz",
    "ax", "ay", "az",
    "jx", "jy", "jz",
    "sx", "sy", "sz",
    "yaw",
]  # fmt: skip


class SingularReferenceError(ValueError):
    """Raised when the reference asks for zero thrust (free fall)."""


@dataclass
class FullReference:
    """Flat outputs expanded to the full state reference at one time."""

    position: Vec3
    velocity: Vec3
    acceleration: Vec3
    rotation: Mat3
    angular_velocity: Vec3
    angular_acceleration: Vec3
    time: float = 0.0
    yaw: float = 0.0


class FlatTrajectory(ABC):
    """Position reference with four derivatives and a yaw reference."""

    duration: float

    @abstractmethod
    def derivatives(self, t: float) -> NDArray[np.float64]:
        """Return a (5, 3) array: position, velocity, acceleration, jerk, snap."""
        pass

    def yaw(self, t: float) -> Tuple[float, float, float]:
        """Yaw angle and its first two derivatives."""
        return 0.0, 0.0, 0.0

    def clamp(self, t: float) -> float:
        """Clip t into [0, duration]."""
        return float(min(max(t, 0.0), self.duration))

    def position(self, t: float) -> Vec3:
        """Reference position."""
        return self.derivatives(t)[0]

    def velocity(self, t: float) -> Vec3:
        """Reference velocity."""
        return self.derivatives(t)[1]

    def sample(self, times: Sequence[float]) -> NDArray[np.float64]:
        """Stack derivatives at several times into an (N, 5, 3) array."""
        return np.stack([self.derivatives(t) for t in times])


def _phase_rate_profile(
    t: float, duration: float, ramp: float, rate: float
) -> NDArray[np.float64]:
    """theta and its first four time derivatives for a ramped constant rate."""
    if t < ramp:
        x = t / ramp
        return np.array(
            [
                rate * ramp * SMOOTHSTEP.integ()(x),
                rate * SMOOTHSTEP(x),
                rate * SMOOTHSTEP.deriv(1)(x) / ramp,
                rate * SMOOTHSTEP.deriv(2)(x) / ramp**2,
                rate * SMOOTHSTEP.deriv(3)(x) / ramp**3,
            ]
        )
    if t > duration - ramp:
        y = (duration - t) / ramp
        total = rate * (duration - ramp)
        return np.array(
            [
                total - rate * ramp * SMOOTHSTEP.integ()(y),
                rate * SMOOTHSTEP(y),
                -rate * SMOOTHSTEP.deriv(1)(y) / ramp,
                rate * SMOOTHSTEP.deriv(2)(y) / ramp**2,
                -rate * SMOOTHSTEP.deriv(3)(y) / ramp**3,
            ]
        )
    return np.array([rate * (0.5 * ramp + t - ramp), rate, 0.0, 0.0, 0.0])


def _chain_rule(shape: NDArray[np.float64], phase: NDArray[np.float64]) -> NDArray[np.float64]:
    """Time derivatives of f(theta(t)) from d^k f / d theta^k and theta derivatives."""
    f0, f1, f2, f3, f4 = shape
    _, t1, t2, t3, t4 = phase
    return np.stack(
        [
            f0,
            f1 * t1,
            f2 * t1**2 + f1 * t2,
            f3 * t1**3 + 3.0 * f2 * t1 * t2 + f1 * t3,
            f4 * t1**4 + 6.0 * f3 * t1**2 * t2 + f2 * (3.0 * t2**2 + 4.0 * t1 * t3) + f1 * t4,
        ]
    )


def _sin_derivatives(theta: float, frequency: float, amplitude: float) -> NDArray[np.float64]:
    return np.array(
        [amplitude * frequency**k * np.sin(frequency * theta + k * np.pi / 2) for k in range(5)]
    )


def _cos_derivatives(theta: float, frequency: float, amplitude: float) -> NDArray[np.float64]:
    return np.array(
        [amplitude * frequency**k * np.cos(frequency * theta + k * np.pi / 2) for k in range(5)]
    )


class ShapeTrajectory(FlatTrajectory):
    """Closed-form test shape driven by a ramped phase angle."""

    KINDS = ("figure8", "circle", "helix", "hover")

    def __init__(
        self,
        kind: str,
        size: Sequence[float],
        speed: float,
        duration: float,
        center: Sequence[float] = (0.0, 0.0, 1.0),
        ramp_time: float = 2.0,
    ):
        """
        Initialize a test shape.

        Args:
            kind: figure8, circle, helix or hover
            size: circle (radius,), figure8 (x amplitude, y extent),
                helix (radius, total climb)
            speed: Peak speed (m/s)
            duration: Flight time including both ramps (s)
            center: Shape origin
            ramp_time: Length of the ramp-in and ramp-out (s)
        """
        if kind not in self.KINDS:
            raise ValueError(f"Unknown trajectory kind: {kind}")
        if duration <= 0:
            raise ValueError("duration must be positive")
        if kind != "hover" and speed <= 0:
            raise ValueError("speed must be positive")

        self.kind = kind
        self.size = tuple(float(s) for s in size)
        self.speed = float(speed)
        self.duration = float(duration)
        self.center = np.array(center, dtype=np.float64)
        self.ramp_time = min(float(ramp_time), 0.5 * self.duration)
        cruise = self.duration - self.ramp_time

        if kind == "circle":
            self._require_positive(self.size[:1])
            self.rate = self.speed / self.size[0]
        elif kind == "figure8":
            self._require_positive(self.size[:2])
            self.rate = self.speed / np.hypot(self.size[0], self.size[1])
        elif kind == "helix":
            self._require_positive(self.size[:2])
            climb_speed = self.size[1] / cruise
            if climb_speed >= self.speed:
                raise ValueError("helix climb is too steep for the requested speed")
            self.rate = np.sqrt(self.speed**2 - climb_speed**2) / self.size[0]
            self.climb_per_radian = self.size[1] / (self.rate * cruise)
        else:
            self.rate = 0.0

    def _require_positive(self, values: Sequence[float]) -> None:
        if len(values) == 0 or any(v <= 0 for v in values):
            raise ValueError(f"{self.kind} dimensions must be positive, got {self.size}")

    def _shape(self, theta: float) -> NDArray[np.float64]:
        zeros = np.zeros(5)
        if self.kind == "circle":
            r = self.size[0]
            x, y, z = _cos_derivatives(theta, 1.0, r), _sin_derivatives(theta, 1.0, r), zeros
        elif self.kind == "figure8":
            a, b = self.size[0], self.size[1]
            x, y, z = _sin_derivatives(theta, 1.0, a), _sin_derivatives(theta, 2.0, 0.5 * b), zeros
        else:
            r, c = self.size[0], self.climb_per_radian
            x, y = _cos_derivatives(theta, 1.0, r), _sin_derivatives(theta, 1.0, r)
            z = np.array([c * theta, c, 0.0, 0.0, 0.0])
        return np.stack([x, y, z], axis=1)

    def derivatives(self, t: float) -> NDArray[np.float64]:
        """Return a (5, 3) array: position, velocity, acceleration, jerk, snap."""
        if self.kind == "hover":
            result = np.zeros((5, 3))
            result[0] = self.center
            return result
        phase = _phase_rate_profile(self.clamp(t), self.duration, self.ramp_time, self.rate)
        result = _chain_rule(self._shape(phase[0]), phase)
        result[0] = result[0] + self.center
        return result


class WaypointTrajectory(FlatTrajectory):
    """Rest-to-rest minimum-snap legs between waypoints."""

    def __init__(self, waypoints: NDArray[np.float64], leg_times: Sequence[float]):
        """Initialize from N waypoints and N-1 positive leg durations."""
        waypoints = np.asarray(waypoints, dtype=np.float64)
        leg_times = np.asarray(leg_times, dtype=np.float64)
        if waypoints.ndim != 2 or waypoints.shape[1] != 3 or len(waypoints) < 2:
            raise ValueError("waypoints must be an (N>=2, 3) array")
        if len(leg_times) != len(waypoints) - 1 or np.any(leg_times <= 0):
            raise ValueError("need one positive duration per leg")
        self.waypoints = waypoints
        self.leg_times = leg_times
        self.breaks = np.concatenate([[0.0], np.cumsum(leg_times)])
        self.duration = float(self.breaks[-1])
        self._profile = [SMOOTHSTEP.deriv(k) if k else SMOOTHSTEP for k in range(5)]

    def derivatives(self, t: float) -> NDArray[np.float64]:
        """Return a (5, 3) array: position, velocity, acceleration, jerk, snap."""
        t = self.clamp(t)
        leg = int(np.clip(np.searchsorted(self.breaks, t, side="right") - 1, 0, len(self.leg_times) - 1))
        span = self.leg_times[leg]
        x = (t - self.breaks[leg]) / span
        start, delta = self.waypoints[leg], self.waypoints[leg + 1] - self.waypoints[leg]
        result = np.stack([self._profile[k](x) / span**k * delta for k in range(5)])
        result[0] = result[0] + start
        return result

    def leg_peak_speeds(self) -> NDArray[np.float64]:
        """Peak speed reached on each leg."""
        distances = np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)
        return SMOOTHSTEP_PEAK_SLOPE * distances / self.leg_times


class SampledTrajectory(FlatTrajectory):
    """Trajectory read back from a CSV export, linearly interpolated."""

    def __init__(self, times: NDArray[np.float64], table: NDArray[np.float64], yaw: NDArray[np.float64]):
        """Initialize from sample times, an (N, 5, 3) derivative table and yaw samples."""
        if len(times) < 2 or np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        self.times = np.asarray(times, dtype=np.float64)
        self.table = np.asarray(table, dtype=np.float64)
        self.yaw_samples = np.asarray(yaw, dtype=np.float64)
        self.duration = float(self.times[-1] - self.times[0])

    def derivatives(self, t: float) -> NDArray[np.float64]:
        """Return a (5, 3) array: position, velocity, acceleration, jerk, snap."""
        t = self.times[0] + self.clamp(t)
        flat = self.table.reshape(len(self.times), 15)
        return np.array([np.interp(t, self.times, flat[:, i]) for i in range(15)]).reshape(5, 3)

    def yaw(self, t: float) -> Tuple[float, float, float]:
        """Interpolated yaw; rates are taken as zero."""
        return float(np.interp(self.times[0] + self.clamp(t), self.times, self.yaw_samples)), 0.0, 0.0


def make_shape(
    kind: str,
    size: Sequence[float],
    speed: float,
    duration: float,
    center: Sequence[float] = (0.0, 0.0, 1.0),
    ramp_time: float = 2.0,
) -> ShapeTrajectory:
    """Build one of the ramped test shapes."""
    return ShapeTrajectory(kind, size, speed, duration, center, ramp_time)


def shape_from_config(config: ScenarioConfig, kind: str, payload: bool = False) -> ShapeTrajectory:
    """Test shape with the configured size and the speed of the flight mode."""
    if kind == "hover":
        return make_shape("hover", (0.0, 0.0, 0.0), 1.0, 10.0, config.trajectories.center)
    try:
        shape = config.trajectories.shapes[kind]
    except KeyError:
        raise ValueError(f"No configuration for trajectory kind: {kind}")
    return make_shape(
        kind,
        shape.size,
        shape.payload_speed if payload else shape.speed,
        shape.duration,
        config.trajectories.center,
        config.trajectories.ramp_time,
    )


def make_random_waypoints(
    bbox: Sequence[float],
    speed_range: Tuple[float, float],
    duration: float,
    seed: int,
    center: Sequence[float] = (0.0, 0.0, 1.0),
    start: Optional[Sequence[float]] = None,
    min_leg_length: float = 0.2,
    max_acceleration: float = 5.0,
    min_leg_time: float = 0.5,
) -> WaypointTrajectory:
    """
    Random flight through waypoints drawn uniformly inside a box.

    Each leg gets its own speed drawn from speed_range and a duration chosen so
    that the leg's peak speed equals it. Legs are stretched where that speed
    would need more than max_acceleration and never run shorter than
    min_leg_time.
    """
    extents = np.asarray(bbox, dtype=np.float64)
    if extents.shape != (3,) or np.any(extents <= 0):
        raise ValueError("bbox must hold three positive extents")
    lo, hi = speed_range
    if not (0 < lo <= hi <= 8.0):
        raise ValueError("speed range must satisfy 0 < low <= high <= 8 m/s")
    if max_acceleration <= 0 or min_leg_time <= 0:
        raise ValueError("max_acceleration and min_leg_time must be positive")

    rng = np.random.default_rng(seed)
    center = np.asarray(center, dtype=np.float64)
    half = 0.5 * extents
    current = center.copy() if start is None else np.asarray(start, dtype=np.float64)
    waypoints: List[NDArray[np.float64]] = [current]
    leg_times: List[float] = []
    elapsed = 0.0
    while elapsed < duration:
        target = center + rng.uniform(-half, half)
        distance = float(np.linalg.norm(target - current))
        if distance < min_leg_length:
            continue
        speed = float(rng.uniform(lo, hi))
        leg = max(
            distance * SMOOTHSTEP_PEAK_SLOPE / speed,
            float(np.sqrt(SMOOTHSTEP_PEAK_ACCEL * distance / max_acceleration)),
            min_leg_time,
        )
        waypoints.append(target)
        leg_times.append(leg)
        elapsed += leg
        current = target

    logger.debug(f"Random flight: {len(leg_times)} legs over {elapsed:.1f}s (seed {seed})")
    return WaypointTrajectory(np.stack(waypoints), leg_times)


def waypoints_from_config(
    collection: CollectionConfig, seed: int, payload: bool = False
) -> WaypointTrajectory:
    """Random training flight from the collection section."""
    return make_random_waypoints(
        collection.bbox,
        collection.payload_speed_range if payload else collection.speed_range,
        collection.flight_duration,
        seed,
        collection.bbox_center,
        max_acceleration=collection.payload_max_acceleration if payload else collection.max_acceleration,
        min_leg_time=collection.min_leg_time,
    )


def _unit_with_derivatives(
    u: Vec3, du: Vec3, ddu: Vec3
) -> Tuple[Vec3, Vec3, Vec3]:
    """n = u/|u| with its first and second time derivatives."""
    s = float(np.linalg.norm(u))
    n = u / s
    s_dot = float(n @ du)
    n_dot = (du - n * s_dot) / s
    s_ddot = float(n_dot @ du + n @ ddu)
    n_ddot = (ddu - 2.0 * n_dot * s_dot - n * s_ddot) / s
    return n, n_dot, n_ddot


def flat_expand(traj: FlatTrajectory, t: float, gravity: float = 9.81) -> FullReference:
    """Expand the flat outputs at time t to attitude, body rate and acceleration references."""
    p, v, a, jerk, snap = traj.derivatives(t)
    yaw, yaw_rate, yaw_accel = traj.yaw(t)

    thrust = a + gravity * E_Z
    if np.linalg.norm(thrust) < SINGULAR_THRUST:
        raise SingularReferenceError(f"Reference at t={t:.3f}s demands zero thrust")
    z, z_dot, z_ddot = _unit_with_derivatives(thrust, jerk, snap)

    c, s = np.cos(yaw), np.sin(yaw)
    heading = np.array([c, s, 0.0])
    heading_dot = yaw_rate * np.array([-s, c, 0.0])
    heading_ddot = yaw_accel * np.array([-s, c, 0.0]) - yaw_rate**2 * heading

    w = np.cross(z, heading)
    if np.linalg.norm(w) < SINGULAR_THRUST:
        raise SingularReferenceError(f"Thrust axis aligned with heading at t={t:.3f}s")
    w_dot = np.cross(z_dot, heading) + np.cross(z, heading_dot)
    w_ddot = (
        np.cross(z_ddot, heading) + 2.0 * np.cross(z_dot, heading_dot) + np.cross(z, heading_ddot)
    )
    y, y_dot, y_ddot = _unit_with_derivatives(w, w_dot, w_ddot)

    x = np.cross(y, z)
    x_dot = np.cross(y_dot, z) + np.cross(y, z_dot)
    x_ddot = np.cross(y_ddot, z) + 2.0 * np.cross(y_dot, z_dot) + np.cross(y, z_ddot)

    rotation = np.column_stack([x, y, z])
    rotation_dot = np.column_stack([x_dot, y_dot, z_dot])
    rotation_ddot = np.column_stack([x_ddot, y_ddot, z_ddot])

    # R^T R_ddot = hat(w_dot) + hat(w)^2; the square is symmetric
    angular_velocity = vee(skew_part(rotation.T @ rotation_dot))
    angular_acceleration = vee(skew_part(rotation.T @ rotation_ddot))

    return FullReference(
        position=p,
        velocity=v,
        acceleration=a,
        rotation=rotation,
        angular_velocity=angular_velocity,
        angular_acceleration=angular_acceleration,
        time=t,
        yaw=float(yaw),
    )


def export_trajectory_csv(traj: FlatTrajectory, path: Union[str, Path], rate_hz: float = 500.0) -> Path:
    """Write the trajectory sampled at rate_hz as CSV."""
    path = Path(path)
    count = int(np.floor(traj.duration * rate_hz + 1e-9)) + 1
    times = np.arange(count) / rate_hz
    table = traj.sample(times).reshape(count, 15)
    yaw = np.array([traj.yaw(t)[0] for t in times])
    frame = pd.DataFrame(np.column_stack([times, table, yaw]), columns=TRAJECTORY_COLUMNS)
    try:
        frame.to_csv(path, index=False, float_format="%.17g")
    except OSError as e:
        raise OSError(f"Cannot write trajectory to {path}: {e}") from e
    logger.info(f"Trajectory written to {path} ({count} samples)")
    return path


def load_trajectory_csv(path: Union[str, Path]) -> SampledTrajectory:
    """Read a trajectory written by export_trajectory_csv."""
    frame = pd.read_csv(path)
    missing = [c for c in TRAJECTORY_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"Trajectory file {path} lacks columns: {missing}")
    times = frame["t"].to_numpy(dtype=np.float64)
    table = frame[TRAJECTORY_COLUMNS[1:16]].to_numpy(dtype=np.float64).reshape(-1, 5, 3)
    return SampledTrajectory(times, table, frame["yaw"].to_numpy(dtype=np.float64))
