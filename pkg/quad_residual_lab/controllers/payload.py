"""Cascaded tracking of a cable-suspended payload."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from ..dynamics import PayloadParams, PayloadState, VehicleParams, VehicleState
from ..mathcore import E_Z, Mat3, Vec3, skew_part, vee
from .base import GainSet
from .geometric import attitude_from_thrust, attitude_torque

MIN_PAYLOAD_FORCE = 1e-6


class UndefinedCableDirectionError(ValueError):
    """Raised when the desired payload force vanishes."""


@dataclass
class CascadeMemory:
    """Previous desired cable direction and attitude for finite differencing."""

    cable_direction: Optional[Vec3] = None
    rotation: Optional[Mat3] = None


def desired_cable_direction(
    payload: PayloadState,
    reference: NDArray[np.float64],
    gains: GainSet,
    payload_params: PayloadParams,
    gravity: float,
) -> Tuple[Vec3, Vec3]:
    """First level: desired payload force F_d and cable direction q_d = -F_d/|F_d|."""
    e_p = payload.position - reference[0]
    e_v = payload.velocity - reference[1]
    force_d = payload_params.mass * (reference[2] + gravity * E_Z) - gains.kpp * e_p - gains.kvp * e_v
    norm = float(np.linalg.norm(force_d))
    if norm < MIN_PAYLOAD_FORCE:
        raise UndefinedCableDirectionError(f"Desired payload force vanished (|F_d| = {norm:.2e} N)")
    return force_d, -force_d / norm


def payload_control(
    vehicle: VehicleState,
    payload: PayloadState,
    reference: NDArray[np.float64],
    residual_torque: Vec3,
    gains: GainSet,
    params: VehicleParams,
    payload_params: PayloadParams,
    dt: float,
    memory: Optional[CascadeMemory] = None,
) -> Tuple[float, Vec3]:
    """
    Thrust and torque that make the payload follow its reference.

    Args:
        vehicle: Current vehicle state
        payload: Current payload state (cable taut)
        reference: (5, 3) payload position derivatives at this tick
        residual_torque: tau_a feed-forward
        gains: Controller gains
        params: Vehicle model
        payload_params: Payload model
        dt: Control period used for finite differencing
        memory: Carried between ticks; a fresh one means zero reference rates

    Returns:
        Tuple of collective thrust and body torque
    """
    memory = memory if memory is not None else CascadeMemory()
    m, m_p = params.mass, payload_params.mass

    force_d, q_d = desired_cable_direction(payload, reference, gains, payload_params, params.gravity)
    q_d_dot = np.zeros(3) if memory.cable_direction is None else (q_d - memory.cable_direction) / dt

    r = payload.position - vehicle.position
    length = float(np.linalg.norm(r))
    q = r / length
    relative = payload.velocity - vehicle.velocity
    q_dot = (relative - float(relative @ q) * q) / length

    # second level: keep the component along the cable, steer the rest
    parallel = (m + m_p) / m_p * float(force_d @ q) * q
    e_q = np.cross(q, np.cross(q, q_d))
    e_q_dot = q_dot - np.cross(np.cross(q_d, q_d_dot), q)
    force = parallel + gains.kq * e_q + gains.kqdot * e_q_dot

    thrust = float(force @ vehicle.rotation[:, 2])
    rotation_d = attitude_from_thrust(force, 0.0)
    if memory.rotation is None:
        omega_d = np.zeros(3)
    else:
        omega_d = vee(skew_part(memory.rotation.T @ rotation_d)) / dt

    torque = attitude_torque(
        vehicle, rotation_d, omega_d, np.zeros(3), residual_torque, gains, params
    )

    memory.cable_direction = q_d
    memory.rotation = rotation_d
    return thrust, torque
