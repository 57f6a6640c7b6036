"""Scenario configuration: one document, validated once, shared by every run."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from typing_extensions import Literal

logger = logging.getLogger(__name__)

ResidualKind = Literal["none", "linear_drag", "quadratic_drag", "constant", "scripted"]
ShapeKind = Literal["figure8", "circle", "helix", "hover"]


class _Section(BaseModel):
    """Base for every config section: frozen, unknown keys rejected."""

    model_config = ConfigDict(extra="forbid", frozen=True)


class VehicleConfig(_Section):
    """Rigid body, rotors and motor lag."""

    mass: float = Field(0.0347, gt=0)
    inertia: Tuple[float, float, float] = (16.6e-6, 16.6e-6, 29.3e-6)
    kappa_f: float = Field(2.25e-8, gt=0)
    torque_ratio: float = Field(0.006, gt=0)
    arm_length: float = Field(0.046, gt=0)
    rotor_speed_min: float = Field(0.0, ge=0)
    rotor_speed_max: float = Field(2700.0, gt=0)
    gravity: float = Field(9.81, gt=0)
    motor_time_constant: float = Field(0.030, ge=0)
    actuation_matrix: Optional[List[List[float]]] = None

    @field_validator("inertia")
    @classmethod
    def _positive_inertia(cls, value: Tuple[float, float, float]) -> Tuple[float, ...]:
        if any(j <= 0 for j in value):
            raise ValueError("inertia entries must be positive")
        return value

    @field_validator("actuation_matrix")
    @classmethod
    def _square_actuation(
        cls, value: Optional[List[List[float]]]
    ) -> Optional[List[List[float]]]:
        if value is not None and (len(value) != 4 or any(len(r) != 4 for r in value)):
            raise ValueError("actuation_matrix must be 4x4")
        return value


class PayloadConfig(_Section):
    """Cable-suspended point mass."""

    mass: float = Field(0.005, gt=0)
    cable_length: float = Field(0.5, gt=0)


class ResidualConfig(_Section):
    """Ground-truth source of the unmodelled force and torque."""

    kind: ResidualKind = "none"
    drag: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    torque_drag: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    force_bias: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    torque_bias: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    script_times: List[float] = Field(default_factory=list)
    script_values: List[List[float]] = Field(default_factory=list)

    @field_validator("script_values")
    @classmethod
    def _six_columns(cls, value: List[List[float]]) -> List[List[float]]:
        if any(len(row) != 6 for row in value):
            raise ValueError("script_values rows must hold (f_a, tau_a) = 6 values")
        return value


class NoiseConfig(_Section):
    """Additive Gaussian sensor noise (standard deviations)."""

    accel_std: float = Field(0.0, ge=0)
    gyro_std: float = Field(0.0, ge=0)
    rpm_std: float = Field(0.0, ge=0)
    payload_position_std: float = Field(0.0, ge=0)


class TimingConfig(_Section):
    """Physics and control rates."""

    physics_dt: float = Field(0.001, gt=0, le=0.01)
    control_dt: float = Field(0.002, gt=0)


class FilterConfig(_Section):
    """Butterworth low-pass used by the residual estimator."""

    cutoff_hz: float = Field(8.0, gt=0)
    order: int = Field(2, ge=1)
    warmup_samples: int = Field(5, ge=1)


class GainConfig(_Section):
    """Diagonal controller gains; None means the mass-scaled default."""

    kp: Optional[Tuple[float, float, float]] = None
    kv: Optional[Tuple[float, float, float]] = None
    kr: Tuple[float, float, float] = (0.004, 0.004, 0.004)
    kw: Tuple[float, float, float] = (0.001, 0.001, 0.001)
    kpp: Tuple[float, float, float] = (0.011, 0.011, 0.011)
    kvp: Tuple[float, float, float] = (0.015, 0.015, 0.015)
    kq: Tuple[float, float, float] = (0.1, 0.1, 0.1)
    kqdot: Tuple[float, float, float] = (0.1, 0.1, 0.1)


class ShapeConfig(_Section):
    """Size and timing of one test shape."""

    size: Tuple[float, float, float]
    speed: float = Field(gt=0)
    payload_speed: float = Field(gt=0)
    duration: float = Field(gt=0)


def _default_shapes() -> Dict[str, ShapeConfig]:
    return {
        "figure8": ShapeConfig(size=(1.0, 0.6, 0.0), speed=1.7, payload_speed=1.2, duration=12.0),
        "circle": ShapeConfig(size=(0.8, 0.0, 0.0), speed=1.7, payload_speed=1.0, duration=10.0),
        "helix": ShapeConfig(size=(0.6, 0.6, 0.0), speed=1.6, payload_speed=1.0, duration=10.0),
    }


class TrajectoryConfig(_Section):
    """Test shapes and their common start point."""

    shapes: Dict[str, ShapeConfig] = Field(default_factory=_default_shapes)
    center: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    ramp_time: float = Field(2.0, gt=0)


class CollectionConfig(_Section):
    """Random-waypoint training flights."""

    bbox: Tuple[float, float, float] = (1.6, 1.6, 0.4)
    bbox_center: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    speed_range: Tuple[float, float] = (1.0, 3.0)
    payload_speed_range: Tuple[float, float] = (1.0, 2.0)
    flight_duration: float = Field(60.0, gt=0)
    flights: int = Field(2, ge=1)
    controller: str = "indi"
    seed: int = 7
    knot_spacing: float = Field(0.1, gt=0)
    max_acceleration: float = Field(5.0, gt=0)
    payload_max_acceleration: float = Field(2.5, gt=0)
    min_leg_time: float = Field(0.5, gt=0)

    @field_validator("speed_range", "payload_speed_range")
    @classmethod
    def _speed_range(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        lo, hi = value
        if not (0 < lo <= hi <= 8.0):
            raise ValueError("speed range must satisfy 0 < low <= high <= 8 m/s")
        return value


class TrainingConfig(_Section):
    """Network architecture and optimisation schedule."""

    hidden: Tuple[int, ...] = (24, 24, 24)
    leaky_slope: float = Field(0.01, ge=0)
    learning_rate: float = Field(3e-4, gt=0)
    decay_factor: float = Field(0.92, gt=0, lt=1)
    decay_every: int = Field(10, ge=1)
    epochs: int = Field(128, ge=1)
    batch_size: int = Field(512, ge=1)
    validation_fraction: float = Field(0.1, ge=0, lt=1)
    validation_block: int = Field(500, ge=1)
    seed: int = 0
    log_every: int = Field(16, ge=1)


class EvaluationConfig(_Section):
    """Grid runner defaults."""

    trials: int = Field(10, ge=1)
    base_seed: int = 1000
    crash_distance: float = Field(2.0, gt=0)
    workers: int = Field(1, ge=1)


class ScenarioConfig(_Section):
    """Complete scenario document."""

    vehicle: VehicleConfig = Field(default_factory=VehicleConfig)
    payload: PayloadConfig = Field(default_factory=PayloadConfig)
    residual: ResidualConfig = Field(default_factory=ResidualConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    timing: TimingConfig = Field(default_factory=TimingConfig)
    filter: FilterConfig = Field(default_factory=FilterConfig)
    gains: GainConfig = Field(default_factory=GainConfig)
    trajectories: TrajectoryConfig = Field(default_factory=TrajectoryConfig)
    collection: CollectionConfig = Field(default_factory=CollectionConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)

    @property
    def control_substeps(self) -> int:
        """Physics steps per control tick."""
        return max(1, int(round(self.timing.control_dt / self.timing.physics_dt)))

    def with_overrides(self, **sections: Dict[str, Any]) -> ScenarioConfig:
        """Return a copy with the given sections updated key by key."""
        return Profiles.combine(self, sections)


def _read_document(source: Union[str, Path]) -> Dict[str, Any]:
    path = Path(source)
    if path.suffix.lower() in (".json", ".yaml", ".yml") or path.exists():
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ValueError(f"Cannot read configuration file {path}: {e}")
        if path.suffix.lower() in (".yaml", ".yml"):
            document = yaml.safe_load(text) or {}
        else:
            try:
                document = json.loads(text)
            except json.JSONDecodeError:
                raise ValueError(f"Invalid JSON in configuration file {path}")
        return document

    try:
        return json.loads(str(source))
    except json.JSONDecodeError:
        raise ValueError("Invalid JSON configuration string")


def load_config(
    source: Union[ScenarioConfig, Dict[str, Any], str, Path, None] = None,
) -> ScenarioConfig:
    """
    Build a ScenarioConfig.

    Args:
        source: a ScenarioConfig, a dict, a path to a JSON/YAML file, a JSON
            string, or None for the defaults.

    Returns:
        Validated, immutable configuration.
    """
    if source is None:
        return ScenarioConfig()
    if isinstance(source, ScenarioConfig):
        return source

    document = source if isinstance(source, dict) else _read_document(source)
    if not isinstance(document, dict):
        raise ValueError("Configuration must be a mapping or JSON/YAML document")

    try:
        config = ScenarioConfig.model_validate(document)
    except ValidationError as e:
        raise ValueError(f"Invalid configuration: {e}") from e

    logger.info(f"Scenario configuration loaded ({len(document)} sections overridden)")
    return config


def _merge(base: Dict[str, Any], updates: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


class Profiles:
    """Factory for named scenario profiles."""

    @staticmethod
    def default() -> ScenarioConfig:
        """Nominal defaults: exact model, noiseless sensors."""
        return ScenarioConfig()

    @staticmethod
    def quick() -> ScenarioConfig:
        """Quick-test profile: fewer trials and shorter collection flights."""
        return Profiles.combine(
            ScenarioConfig(),
            {
                "evaluation": {"trials": 5},
                "collection": {"flight_duration": 30.0},
                "training": {"epochs": 32},
            },
        )

    @staticmethod
    def drag() -> ScenarioConfig:
        """Quadratic body drag strong enough that the plain geometric controller lags by 5 cm or more."""
        return Profiles.combine(
            ScenarioConfig(),
            {
                "residual": {"kind": "quadratic_drag", "drag": (0.03, 0.03, 0.015)},
                "noise": {"accel_std": 0.05, "gyro_std": 0.005, "rpm_std": 5.0},
            },
        )

    @staticmethod
    def combine(
        base: ScenarioConfig, *overrides: Dict[str, Any]
    ) -> ScenarioConfig:
        """Merge nested override dictionaries into a profile."""
        document = base.model_dump()
        for override in overrides:
            document = _merge(document, override)
        try:
            return ScenarioConfig.model_validate(document)
        except ValidationError as e:
            raise ValueError(f"Invalid configuration override: {e}") from e
