"""Gains, control command record and the rotor mixer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..config import GainConfig
from ..dynamics import VehicleParams, Vec4
from ..mathcore import Vec3


def _positive(name: str, values: object) -> Vec3:
    array = np.array(values, dtype=np.float64)
    if array.shape != (3,) or np.any(array <= 0):
        raise ValueError(f"Gain {name} must hold three positive entries")
    return array


@dataclass(frozen=True, eq=False)
class GainSet:
    """Diagonals of the positive-definite gain matrices."""

    kp: Vec3
    kv: Vec3
    kr: Vec3
    kw: Vec3
    kpp: Vec3
    kvp: Vec3
    kq: Vec3
    kqdot: Vec3

    @classmethod
    def from_config(cls, gains: GainConfig, mass: float) -> GainSet:
        """Build gains; unset position gains default to 12m and 6m."""
        kp = gains.kp if gains.kp is not None else (12.0 * mass,) * 3
        kv = gains.kv if gains.kv is not None else (6.0 * mass,) * 3
        return cls(
            kp=_positive("kp", kp),
            kv=_positive("kv", kv),
            kr=_positive("kr", gains.kr),
            kw=_positive("kw", gains.kw),
            kpp=_positive("kpp", gains.kpp),
            kvp=_positive("kvp", gains.kvp),
            kq=_positive("kq", gains.kq),
            kqdot=_positive("kqdot", gains.kqdot),
        )


@dataclass
class ControlCommand:
    """Collective thrust, body torque and the mixed rotor speeds."""

    thrust: float
    torque: Vec3
    rotor_speeds: Optional[Vec4] = None


def _torque_scale(base: Vec4, spread: Vec4, limit: float) -> float:
    """Largest s in [0, 1] keeping base + s * spread inside [0, limit]."""
    scale = 1.0
    for b, d in zip(base, spread):
        if d > 0 and b + d > limit:
            scale = min(scale, (limit - b) / d)
        elif d < 0 and b + d < 0:
            scale = min(scale, -b / d)
    return float(np.clip(scale, 0.0, 1.0))


def mix_to_rotors(thrust: float, torque: Vec3, params: VehicleParams) -> Vec4:
    """
    Convert a wrench to rotor speeds through B0 with thrust priority.

    Torque is scaled down first when a rotor would leave [0, f_max]; the
    resulting forces are then clipped and mapped through omega = sqrt(f / kappa_F).
    """
    f_max = params.max_rotor_force
    thrust = float(np.nan_to_num(thrust, nan=0.0, posinf=4.0 * f_max, neginf=0.0))
    thrust = float(np.clip(thrust, 0.0, 4.0 * f_max))
    torque = np.nan_to_num(np.asarray(torque, dtype=np.float64), nan=0.0, posinf=0.0, neginf=0.0)

    base = params.actuation[:, 0] * thrust
    spread = params.actuation[:, 1:] @ torque
    forces = base + spread
    if np.any(forces > f_max) or np.any(forces < 0.0):
        forces = base + _torque_scale(base, spread, f_max) * spread

    forces = np.clip(forces, 0.0, f_max)
    speeds = np.sqrt(forces / params.kappa_f)
    return np.clip(speeds, params.rotor_speed_min, params.rotor_speed_max)


def hover_rotor_speeds(params: VehicleParams, extra_mass: float = 0.0) -> Vec4:
    """Rotor speeds that hold the vehicle (plus an extra hanging mass) still."""
    return mix_to_rotors((params.mass + extra_mass) * params.gravity, np.zeros(3), params)
