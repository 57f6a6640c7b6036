"""Per-tick flight records and their CSV form."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
from numpy.typing import NDArray

logger = logging.getLogger(__name__)

STREAMS = ("true", "indi", "indi_pwm", "indi_raw", "nn", "na_indi")
RESIDUAL_SUFFIXES = ("fx", "fy", "fz", "tx", "ty", "tz")

_XYZ = ("x", "y", "z")
_VECTOR_FIELDS = {
    "position": "p",
    "velocity": "v",
    "angular_velocity": "w",
    "accel": "acc",
    "gyro": "gyro",
    "accel_filtered": "accf",
    "torque": "tau",
    "reference": "ref",
}
_QUAD_FIELDS = {"rpm": "rpm", "pwm": "pwm", "rotor_command": "cmd"}
_PAYLOAD_FIELDS = {"payload_position": "pp", "payload_velocity": "pv"}


class MisalignedStreamsError(ValueError):
    """Raised when logged series do not share one uniform timebase."""


def _columns(prefix: str, count: int) -> List[str]:
    if count == 3:
        return [f"{prefix}_{axis}" for axis in _XYZ]
    return [f"{prefix}{i + 1}" for i in range(count)]


def _rotation_columns() -> List[str]:
    return [f"r{i}{j}" for i in range(3) for j in range(3)]


@dataclass
class FlightLog:
    """Everything recorded at each control tick of one flight."""

    time: NDArray[np.float64]
    position: NDArray[np.float64]
    velocity: NDArray[np.float64]
    rotation: NDArray[np.float64]
    angular_velocity: NDArray[np.float64]
    accel: NDArray[np.float64]
    gyro: NDArray[np.float64]
    rpm: NDArray[np.float64]
    pwm: NDArray[np.float64]
    accel_filtered: NDArray[np.float64]
    thrust: NDArray[np.float64]
    torque: NDArray[np.float64]
    rotor_command: NDArray[np.float64]
    reference: NDArray[np.float64]
    residuals: Dict[str, NDArray[np.float64]] = field(default_factory=dict)
    payload_position: Optional[NDArray[np.float64]] = None
    payload_velocity: Optional[NDArray[np.float64]] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.time)

    @property
    def crashed(self) -> bool:
        """True if the flight was stopped early."""
        return bool(self.metadata.get("crashed", False))

    @property
    def target(self) -> str:
        """vehicle or payload: which body tracks the reference."""
        return str(self.metadata.get("target", "vehicle"))

    def tracked_position(self) -> NDArray[np.float64]:
        """Positions of the body that tracks the reference."""
        if self.target == "payload":
            if self.payload_position is None:
                raise ValueError("payload log without payload positions")
            return self.payload_position
        return self.position

    def residual(self, stream: str) -> NDArray[np.float64]:
        """(N, 6) residual series of one stream."""
        try:
            return self.residuals[stream]
        except KeyError:
            raise KeyError(f"Stream {stream!r} not logged; have {sorted(self.residuals)}")

    def check_uniform(self, tolerance: float = 1e-9) -> None:
        """Raise MisalignedStreamsError unless every series matches a uniform timebase."""
        n = len(self.time)
        series = [
            self.position, self.velocity, self.rotation, self.angular_velocity,
            self.accel, self.gyro, self.rpm, self.pwm, self.accel_filtered,
            self.thrust, self.torque, self.rotor_command, self.reference,
        ] + list(self.residuals.values())  # fmt: skip
        if any(len(s) != n for s in series):
            raise MisalignedStreamsError("logged series differ in length")
        if n > 2:
            steps = np.diff(self.time)
            if np.any(steps <= 0) or np.ptp(steps) > tolerance:
                raise MisalignedStreamsError("timestamps are not uniformly spaced")

    def to_frame(self) -> pd.DataFrame:
        """Wide table with one row per tick."""
        blocks: Dict[str, NDArray[np.float64]] = {"t": self.time}
        for name, prefix in _VECTOR_FIELDS.items():
            for col, values in zip(_columns(prefix, 3), getattr(self, name).T):
                blocks[col] = values
        for col, values in zip(_rotation_columns(), self.rotation.reshape(-1, 9).T):
            blocks[col] = values
        for name, prefix in _QUAD_FIELDS.items():
            for col, values in zip(_columns(prefix, 4), getattr(self, name).T):
                blocks[col] = values
        blocks["thrust"] = self.thrust
        for name, prefix in _PAYLOAD_FIELDS.items():
            data = getattr(self, name)
            if data is not None:
                for col, values in zip(_columns(prefix, 3), data.T):
                    blocks[col] = values
        for stream in STREAMS:
            if stream in self.residuals:
                for suffix, values in zip(RESIDUAL_SUFFIXES, self.residuals[stream].T):
                    blocks[f"{stream}_{suffix}"] = values
        return pd.DataFrame(blocks)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, metadata: Optional[Dict[str, Any]] = None) -> FlightLog:
        """Inverse of to_frame()."""

        def take(columns: List[str]) -> NDArray[np.float64]:
            return frame[columns].to_numpy(dtype=np.float64)

        values: Dict[str, Any] = {"time": frame["t"].to_numpy(dtype=np.float64)}
        for name, prefix in _VECTOR_FIELDS.items():
            values[name] = take(_columns(prefix, 3))
        values["rotation"] = take(_rotation_columns()).reshape(-1, 3, 3)
        for name, prefix in _QUAD_FIELDS.items():
            values[name] = take(_columns(prefix, 4))
        values["thrust"] = frame["thrust"].to_numpy(dtype=np.float64)
        for name, prefix in _PAYLOAD_FIELDS.items():
            columns = _columns(prefix, 3)
            values[name] = take(columns) if columns[0] in frame.columns else None
        values["residuals"] = {
            stream: take([f"{stream}_{s}" for s in RESIDUAL_SUFFIXES])
            for stream in STREAMS
            if f"{stream}_fx" in frame.columns
        }
        values["metadata"] = dict(metadata or {})
        return cls(**values)

    def save_csv(self, path: Union[str, Path]) -> Path:
        """Write the table to path and the metadata next to it as JSON."""
        path = Path(path)
        try:
            self.to_frame().to_csv(path, index=False, float_format="%.17g")
            path.with_suffix(".json").write_text(
                json.dumps(self.metadata, indent=2, sort_keys=True), encoding="utf-8"
            )
        except OSError as e:
            raise OSError(f"Cannot write flight log {path}: {e}") from e
        logger.info(f"Flight log written to {path} ({len(self)} ticks)")
        return path

    @classmethod
    def load_csv(cls, path: Union[str, Path]) -> FlightLog:
        """Read a log written by save_csv()."""
        path = Path(path)
        sidecar = path.with_suffix(".json")
        metadata = json.loads(sidecar.read_text(encoding="utf-8")) if sidecar.exists() else {}
        return cls.from_frame(pd.read_csv(path), metadata)


def _empty_arrays() -> Dict[str, NDArray[np.float64]]:
    """Zero-length series for a flight that never ticked."""
    arrays = {name: np.zeros((0, 3)) for name in _VECTOR_FIELDS}
    arrays.update({name: np.zeros((0, 4)) for name in _QUAD_FIELDS})
    arrays.update(time=np.zeros(0), thrust=np.zeros(0), rotation=np.zeros((0, 3, 3)))
    return arrays


class FlightLogRecorder:
    """Collects per-tick values and freezes them into a FlightLog."""

    def __init__(self, metadata: Optional[Dict[str, Any]] = None):
        """Start an empty recording."""
        self.metadata: Dict[str, Any] = dict(metadata or {})
        self._rows: Dict[str, List[Any]] = {}
        self._residuals: Dict[str, List[NDArray[np.float64]]] = {}

    def __len__(self) -> int:
        return len(self._rows.get("time", []))

    def record(self, residuals: Optional[Dict[str, NDArray[np.float64]]] = None, **values: Any) -> None:
        """Append one tick; keyword names match FlightLog fields."""
        for name, value in values.items():
            self._rows.setdefault(name, []).append(np.array(value, dtype=np.float64))
        for stream, value in (residuals or {}).items():
            self._residuals.setdefault(stream, []).append(np.asarray(value, dtype=np.float64))

    def finish(self, **metadata: Any) -> FlightLog:
        """Freeze the recording; with no ticks every series is empty."""
        self.metadata.update(metadata)
        arrays = {name: np.stack(rows) for name, rows in self._rows.items()}
        if not arrays:
            arrays = _empty_arrays()
        for name in _PAYLOAD_FIELDS:
            arrays.setdefault(name, None)
        residuals = {stream: np.stack(rows) for stream, rows in self._residuals.items()}
        return FlightLog(residuals=residuals, metadata=self.metadata, **arrays)
