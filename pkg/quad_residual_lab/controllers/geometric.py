"""Geometric SE(3) tracking law with residual feed-forward."""

from __future__ import annotations

from typing import Tuple

import numpy as np

from ..dynamics import VehicleParams, VehicleState
from ..indi import ResidualEstimate
from ..mathcore import E_Z, Mat3, Vec3, hat, normalize, skew_part, vee
from ..trajectory import FullReference
from .base import GainSet


def attitude_errors(
    rotation: Mat3,
    angular_velocity: Vec3,
    rotation_d: Mat3,
    angular_velocity_d: Vec3,
) -> Tuple[Vec3, Vec3]:
    """e_R = vee(R_d^T R - R^T R_d) / 2 and e_w = w - R^T R_d w_d."""
    e_r = vee(skew_part(rotation_d.T @ rotation))
    e_w = angular_velocity - rotation.T @ rotation_d @ angular_velocity_d
    return e_r, e_w


def attitude_from_thrust(direction: Vec3, yaw: float = 0.0) -> Mat3:
    """Rotation whose z axis is the given direction, with x axis near the yaw heading."""
    if np.linalg.norm(direction) < 1e-9:
        direction = E_Z
    z = normalize(direction)
    heading = np.array([np.cos(yaw), np.sin(yaw), 0.0])
    y = normalize(np.cross(z, heading))
    return np.column_stack([np.cross(y, z), y, z])


def attitude_torque(
    state: VehicleState,
    rotation_d: Mat3,
    angular_velocity_d: Vec3,
    angular_acceleration_d: Vec3,
    residual_torque: Vec3,
    gains: GainSet,
    params: VehicleParams,
) -> Vec3:
    """Attitude law: PD on SO(3) plus gyroscopic and reference feed-forward."""
    rotation, omega = state.rotation, state.angular_velocity
    inertia = params.inertia
    e_r, e_w = attitude_errors(rotation, omega, rotation_d, angular_velocity_d)
    relative = rotation.T @ rotation_d
    return (
        -gains.kr * e_r
        - gains.kw * e_w
        - np.cross(inertia @ omega, omega)
        - inertia @ (hat(omega) @ relative @ angular_velocity_d - relative @ angular_acceleration_d)
        - residual_torque
    )


def lee_control(
    state: VehicleState,
    ref: FullReference,
    residual: ResidualEstimate,
    gains: GainSet,
    params: VehicleParams,
) -> Tuple[float, Vec3]:
    """Collective thrust and body torque tracking a flat reference."""
    e_p = state.position - ref.position
    e_v = state.velocity - ref.velocity
    desired_force = (
        -gains.kp * e_p
        - gains.kv * e_v
        + params.hover_thrust * E_Z
        + params.mass * ref.acceleration
        - residual.force
    )
    thrust = float(desired_force @ state.rotation[:, 2])
    # desired attitude follows the commanded force; rates come from flatness
    rotation_d = attitude_from_thrust(desired_force, ref.yaw)
    torque = attitude_torque(
        state,
        rotation_d,
        ref.angular_velocity,
        ref.angular_acceleration,
        residual.torque,
        gains,
        params,
    )
    return thrust, torque
