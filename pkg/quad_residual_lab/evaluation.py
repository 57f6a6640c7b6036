"""Closed-loop trials, tracking-error metric and the controller x trajectory grid."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from .config import ScenarioConfig
from .controllers import (
    CascadeMemory,
    GainSet,
    UndefinedCableDirectionError,
    hover_rotor_speeds,
    lee_control,
    mix_to_rotors,
    payload_control,
)
from .dynamics import MultirotorEngine, SimulationDivergedError, VehicleState
from .flight_log import FlightLog, FlightLogRecorder
from .indi import IndiState
from .learning.features import build_features
from .learning.mlp import MlpModel, load_model
from .mathcore import E_Z, NotARotationError
from .sources import CONTROLLER_STREAMS, NETWORK_CONTROLLERS, EstimationContext, build_registry
from .trajectory import (
    FlatTrajectory,
    SingularReferenceError,
    flat_expand,
    shape_from_config,
    waypoints_from_config,
)

logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "controller",
    "trajectory",
    "payload",
    "trials",
    "mean_error",
    "std_error",
    "crashed",
    "crashed_trials",
]

# Published hardware results, (mean, std) in metres;
# None marks a controller that could not fly the trajectory.
HARDWARE_REFERENCE: Dict[Tuple[str, str, bool], Optional[Tuple[float, float]]] = {
    ("lee", "circle", False): (0.0752, 0.0122),
    ("lee", "figure8", False): (0.0729, 0.0031),
    ("lee", "helix", False): None,
    ("indi_pwm", "circle", False): (0.1827, 0.0097),
    ("indi_pwm", "figure8", False): (0.1889, 0.0182),
    ("indi_pwm", "helix", False): None,
    ("indi", "circle", False): (0.0455, 0.0024),
    ("indi", "figure8", False): (0.0453, 0.0031),
    ("indi", "helix", False): (0.0316, 0.0019),
    ("ilndi", "circle", False): (0.0482, 0.0024),
    ("ilndi", "figure8", False): (0.0432, 0.0024),
    ("ilndi", "helix", False): (0.0290, 0.0015),
    ("na_indi", "circle", False): (0.0450, 0.0028),
    ("na_indi", "figure8", False): (0.0413, 0.0013),
    ("na_indi", "helix", False): (0.0286, 0.0011),
    ("lee", "circle", True): (0.1974, 0.0172),
    ("lee", "figure8", True): (0.3014, 0.0287),
    ("lee", "helix", True): (0.1488, 0.0332),
    ("indi", "circle", True): (0.1263, 0.0291),
    ("indi", "figure8", True): (0.1731, 0.0223),
    ("indi", "helix", True): (0.1144, 0.0462),
    ("ilndi", "circle", True): (0.1318, 0.0233),
    ("ilndi", "figure8", True): (0.2496, 0.0223),
    ("ilndi", "helix", True): (0.1197, 0.0518),
    ("na_indi", "circle", True): (0.1554, 0.0396),
    ("na_indi", "figure8", True): (0.1829, 0.0306),
    ("na_indi", "helix", True): (0.1469, 0.0557),
}


@dataclass(frozen=True)
class ExperimentSpec:
    """One cell of the grid: controller, trajectory, payload mode and trials."""

    controller: str
    trajectory: str
    payload: bool = False
    trials: int = 10
    base_seed: int = 1000
    config: ScenarioConfig = field(default_factory=ScenarioConfig)
    model_path: Optional[str] = None
    oracle_network: bool = False

    def __post_init__(self) -> None:
        if self.controller not in CONTROLLER_STREAMS:
            raise ValueError(f"Unknown controller: {self.controller}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.controller in NETWORK_CONTROLLERS and not self.oracle_network:
            if self.model_path is None or not Path(self.model_path).exists():
                raise ValueError(f"Controller {self.controller} needs an existing model file")

    def seeds(self) -> List[int]:
        """Seeds of the trials; shared between cells for paired comparisons."""
        return [self.base_seed + i for i in range(self.trials)]


def mean_distance(actual: NDArray[np.float64], reference: NDArray[np.float64]) -> float:
    """Mean Euclidean distance between two (N, 3) position series."""
    actual = np.asarray(actual, dtype=np.float64)
    if len(actual) == 0:
        raise ValueError("empty position series")
    return float(np.mean(np.linalg.norm(actual - np.asarray(reference, dtype=np.float64), axis=1)))


def tracking_error(log: FlightLog, target: Optional[str] = None) -> float:
    """Mean distance of the vehicle (or payload) from the reference over all ticks."""
    if target is None or target == log.target:
        positions = log.tracked_position()
    elif target == "payload":
        if log.payload_position is None:
            raise ValueError("log has no payload positions")
        positions = log.payload_position
    else:
        positions = log.position
    return mean_distance(positions, log.reference)


def fly(
    config: ScenarioConfig,
    trajectory: FlatTrajectory,
    controller: str,
    payload: bool = False,
    seed: int = 0,
    model: Optional[MlpModel] = None,
    oracle_network: bool = False,
    metadata: Optional[Dict[str, object]] = None,
) -> FlightLog:
    """
    Fly one reference closed loop and record every control tick.

    All residual streams are computed at every tick; the controller consumes
    the one that belongs to its variant. Divergence or an error above the
    crash distance ends the flight early and marks the log as crashed.
    """
    stream = CONTROLLER_STREAMS[controller]
    engine = MultirotorEngine(config, seed=seed, with_payload=payload)
    params, payload_params = engine.params, engine.payload_params
    gains = GainSet.from_config(config.gains, params.mass)
    control_dt = config.timing.control_dt
    substeps = config.control_substeps
    indi = IndiState(params, config.filter, 1.0 / control_dt, payload_params if payload else None)
    registry = build_registry(model, oracle_network)
    if stream not in registry.names():
        raise ValueError(f"Controller {controller} needs a network model")
    memory = CascadeMemory()

    recorder = FlightLogRecorder(
        {
            "controller": controller,
            "trajectory": getattr(trajectory, "kind", "waypoints"),
            "payload": payload,
            "seed": seed,
            "target": "payload" if payload else "vehicle",
            **(metadata or {}),
        }
    )

    start = trajectory.derivatives(0.0)[0]
    if payload:
        vehicle = VehicleState.at_rest(start + payload_params.cable_length * E_Z)
        speeds = hover_rotor_speeds(params, payload_params.mass)
    else:
        try:
            attitude = flat_expand(trajectory, 0.0, params.gravity).rotation
        except SingularReferenceError as e:
            logger.warning(f"{controller} on {recorder.metadata['trajectory']} cannot start: {e}")
            return recorder.finish(crashed=True, crash_reason=f"controller: {e}")
        vehicle = VehicleState.at_rest(start, attitude)
        speeds = hover_rotor_speeds(params)
    engine.reset(vehicle, rotor_speeds=speeds)

    crash_reason = ""
    # Sensors reach the estimator one control tick late.
    frame = pending = engine.sense()
    ticks = int(np.floor(trajectory.duration / control_dt + 1e-9)) + 1

    for k in range(ticks):
        t = k * control_dt
        state = engine.state
        indi.ingest(frame)
        features = build_features(state, frame, indi.accel_f, params.gravity)
        ctx = EstimationContext(frame, state, indi, engine.true_residual(), features)
        streams = registry.estimate_all(ctx)
        driving = streams[stream]

        try:
            if payload:
                reference = trajectory.derivatives(t)
                target_reference = reference[0]
                thrust, torque = payload_control(
                    state, engine.payload, reference, driving.torque, gains,
                    params, payload_params, control_dt, memory,
                )  # fmt: skip
            else:
                full = flat_expand(trajectory, t, params.gravity)
                target_reference = full.position
                thrust, torque = lee_control(state, full, driving, gains, params)
        except (SingularReferenceError, UndefinedCableDirectionError) as e:
            crash_reason = f"controller: {e}"
            break
        command = mix_to_rotors(thrust, torque, params)
        engine.command(command)

        recorder.record(
            residuals={name: estimate.as_vector() for name, estimate in streams.items() if name != "none"},
            time=t,
            position=state.position,
            velocity=state.velocity,
            rotation=state.rotation,
            angular_velocity=state.angular_velocity,
            accel=frame.accel,
            gyro=frame.gyro,
            rpm=frame.rpm,
            pwm=frame.pwm,
            accel_filtered=indi.accel_f,
            thrust=thrust,
            torque=torque,
            rotor_command=command,
            reference=target_reference,
            **(
                {"payload_position": engine.payload.position, "payload_velocity": engine.payload.velocity}
                if payload and engine.payload is not None
                else {}
            ),
        )

        tracked = engine.payload.position if payload and engine.payload is not None else state.position
        error = float(np.linalg.norm(tracked - target_reference))
        if error > config.evaluation.crash_distance:
            crash_reason = f"tracking error {error:.2f} m"
            break
        try:
            for _ in range(substeps):
                engine.step()
        except (SimulationDivergedError, NotARotationError) as e:
            crash_reason = f"diverged: {e}"
            break
        frame, pending = pending, engine.sense()

    if crash_reason:
        logger.warning(
            f"{controller} on {recorder.metadata['trajectory']} (seed {seed}) crashed: {crash_reason}"
        )
    return recorder.finish(crashed=bool(crash_reason), crash_reason=crash_reason)


def run_trial(spec: ExperimentSpec, seed: int, model: Optional[MlpModel] = None) -> FlightLog:
    """One flight of a grid cell; deterministic given the seed."""
    if model is None and spec.model_path is not None and Path(spec.model_path).exists():
        model = load_model(spec.model_path)
    trajectory = shape_from_config(spec.config, spec.trajectory, spec.payload)
    logger.info(f"Trial {spec.controller}/{spec.trajectory} payload={spec.payload} seed={seed}")
    return fly(
        spec.config,
        trajectory,
        spec.controller,
        spec.payload,
        seed,
        model,
        spec.oracle_network,
    )


def collect_flights(
    config: ScenarioConfig,
    payload: bool = False,
    out_dir: Optional[Union[str, Path]] = None,
) -> List[FlightLog]:
    """
    Fly the random-waypoint training flights of the collection section.

    Flight i uses seed collection.seed + i for both the waypoints and the
    simulator noise. With out_dir, each log is written as flight_XXX.csv.
    """
    collection = config.collection
    logs = []
    for i in range(collection.flights):
        seed = collection.seed + i
        trajectory = waypoints_from_config(collection, seed, payload)
        log = fly(
            config,
            trajectory,
            collection.controller,
            payload,
            seed,
            metadata={"trajectory": "waypoints", "flight": i},
        )
        logger.info(f"Collection flight {i}: {len(log)} ticks{' (crashed)' if log.crashed else ''}")
        if out_dir is not None:
            log.save_csv(Path(out_dir) / f"flight_{i:03d}.csv")
        logs.append(log)
    return logs


@dataclass
class CellResult:
    """Per-trial errors of one grid cell, ordered by seed."""

    controller: str
    trajectory: str
    payload: bool
    seeds: List[int]
    errors: List[float]
    crashes: List[bool]

    @property
    def mean(self) -> float:
        """Mean error over trials."""
        return float(np.mean(self.errors))

    @property
    def std(self) -> float:
        """Sample standard deviation (0 for a single trial)."""
        return float(np.std(self.errors, ddof=1)) if len(self.errors) > 1 else 0.0

    @property
    def crashed(self) -> bool:
        """True if any trial crashed."""
        return any(self.crashes)


@dataclass
class ErrorReport:
    """Aggregated grid results."""

    cells: List[CellResult] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        """One row per cell in REPORT_COLUMNS order."""
        rows = [
            (
                c.controller,
                c.trajectory,
                c.payload,
                len(c.errors),
                c.mean,
                c.std,
                c.crashed,
                int(sum(c.crashes)),
            )
            for c in self.cells
        ]
        return pd.DataFrame(rows, columns=REPORT_COLUMNS)

    def cell(self, controller: str, trajectory: str, payload: bool = False) -> Optional[CellResult]:
        """Find a cell."""
        for c in self.cells:
            if (c.controller, c.trajectory, c.payload) == (controller, trajectory, payload):
                return c
        return None


def _trial_summary(spec: ExperimentSpec, seed: int) -> Tuple[int, float, bool]:
    log = run_trial(spec, seed)
    error = tracking_error(log) if len(log) else float("nan")
    return seed, error, log.crashed


def run_grid(specs: Sequence[ExperimentSpec], workers: int = 1) -> ErrorReport:
    """Run every trial of every cell and aggregate mean and spread per cell."""
    jobs = [(spec, seed) for spec in specs for seed in spec.seeds()]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_trial_summary, spec, seed) for spec, seed in jobs]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [_trial_summary(spec, seed) for spec, seed in jobs]

    report = ErrorReport()
    position = 0
    for spec in specs:
        results = sorted(outcomes[position : position + spec.trials])
        position += spec.trials
        report.cells.append(
            CellResult(
                controller=spec.controller,
                trajectory=spec.trajectory,
                payload=spec.payload,
                seeds=[r[0] for r in results],
                errors=[r[1] for r in results],
                crashes=[r[2] for r in results],
            )
        )
        cell = report.cells[-1]
        logger.info(
            f"{spec.controller:>8} {spec.trajectory:>8} payload={spec.payload}: "
            f"{cell.mean:.4f} +/- {cell.std:.4f} m{' (crashed)' if cell.crashed else ''}"
        )
    return report
