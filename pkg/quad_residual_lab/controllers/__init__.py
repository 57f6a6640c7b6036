"""Tracking controllers and the rotor mixer."""

from .base import ControlCommand, GainSet, hover_rotor_speeds, mix_to_rotors
from .geometric import attitude_errors, attitude_from_thrust, attitude_torque, lee_control
from .payload import (
    CascadeMemory,
    UndefinedCableDirectionError,
    desired_cable_direction,
    payload_control,
)

__all__ = [
    "ControlCommand",
    "GainSet",
    "hover_rotor_speeds",
    "mix_to_rotors",
    "attitude_errors",
    "attitude_from_thrust",
    "attitude_torque",
    "lee_control",
    "CascadeMemory",
    "UndefinedCableDirectionError",
    "desired_cable_direction",
    "payload_control",
]
