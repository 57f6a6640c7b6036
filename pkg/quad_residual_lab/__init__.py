"""Quadrotor Residual Lab.

Simulation, estimation and learning of the residual forces and torques of a
quadrotor: geometric tracking control augmented by INDI, a learned residual
network or both, with and without a cable-suspended payload.
"""

from . import controllers, learning
from .config import Profiles, ScenarioConfig, load_config
from .dynamics import MultirotorEngine, PayloadState, ResidualModel, SensorFrame, VehicleState
from .evaluation import ErrorReport, ExperimentSpec, collect_flights, run_grid, run_trial, tracking_error
from .flight_log import FlightLog
from .indi import IndiState, ResidualEstimate
from .report import emit_report, read_report_csv
from .sources import SourceRegistry, build_registry
from .trajectory import ShapeTrajectory, WaypointTrajectory, flat_expand

__version__ = "0.1.0"
__all__ = [
    "ScenarioConfig",
    "Profiles",
    "load_config",
    "MultirotorEngine",
    "VehicleState",
    "PayloadState",
    "SensorFrame",
    "ResidualModel",
    "ShapeTrajectory",
    "WaypointTrajectory",
    "flat_expand",
    "IndiState",
    "ResidualEstimate",
    "SourceRegistry",
    "build_registry",
    "FlightLog",
    "ExperimentSpec",
    "ErrorReport",
    "run_trial",
    "run_grid",
    "collect_flights",
    "tracking_error",
    "emit_report",
    "read_report_csv",
    "controllers",
    "learning",
]
