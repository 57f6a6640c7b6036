"""Command-line entry point: sim, collect, label, train, eval and report."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from .config import Profiles, ScenarioConfig, load_config
from .evaluation import ExperimentSpec, collect_flights, run_grid, run_trial, tracking_error
from .flight_log import FlightLog
from .learning.dataset import TrainingDataset, make_dataset
from .learning.mlp import save_model
from .learning.training import train
from .report import emit_report, read_report_csv
from .sources import CONTROLLER_STREAMS

logger = logging.getLogger(__name__)

PROFILES: Dict[str, Callable[[], ScenarioConfig]] = {
    "default": Profiles.default,
    "quick": Profiles.quick,
    "drag": Profiles.drag,
}
GRID_CONTROLLERS = "lee,indi_pwm,indi,ilndi,na_indi"
GRID_TRAJECTORIES = "circle,figure8,helix"


def _split(value: str) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def build_config(args: argparse.Namespace) -> ScenarioConfig:
    """Profiles first (merged left to right), then the --config document on top."""
    config = Profiles.default()
    for name in _split(args.profile):
        if name not in PROFILES:
            raise ValueError(f"Unknown profile: {name}")
        config = Profiles.combine(config, PROFILES[name]().model_dump(exclude_defaults=True))
    if args.config:
        document = load_config(args.config).model_dump(exclude_defaults=True)
        config = Profiles.combine(config, document)
    return config


def _out_dir(args: argparse.Namespace) -> Path:
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _read_logs(directory: str) -> List[FlightLog]:
    paths = sorted(Path(directory).glob("*.csv"))
    if not paths:
        raise ValueError(f"No flight logs in {directory}")
    return [FlightLog.load_csv(p) for p in paths]


def cmd_sim(args: argparse.Namespace, config: ScenarioConfig) -> int:
    """Fly one trial and write its log."""
    spec = ExperimentSpec(
        controller=args.controller,
        trajectory=args.trajectory,
        payload=args.payload,
        trials=1,
        base_seed=args.seed,
        config=config,
        model_path=args.model,
        oracle_network=args.oracle,
    )
    log = run_trial(spec, args.seed)
    name = f"sim_{args.controller}_{args.trajectory}{'_payload' if args.payload else ''}_seed{args.seed}.csv"
    log.save_csv(_out_dir(args) / name)
    print(f"{args.controller} on {args.trajectory}: mean error {tracking_error(log):.4f} m"
          f"{' (crashed)' if log.crashed else ''}")  # fmt: skip
    return 1 if args.strict and log.crashed else 0


def cmd_collect(args: argparse.Namespace, config: ScenarioConfig) -> int:
    """Fly the random-waypoint training flights."""
    if args.seed is not None:
        config = config.with_overrides(collection={"seed": args.seed})
    if args.controller is not None:
        config = config.with_overrides(collection={"controller": args.controller})
    logs = collect_flights(config, args.payload, _out_dir(args))
    ticks = sum(len(log) for log in logs)
    print(f"Collected {len(logs)} flights, {ticks} ticks")
    return 1 if args.strict and any(log.crashed for log in logs) else 0


def cmd_label(args: argparse.Namespace, config: ScenarioConfig) -> int:
    """Spline-label the logged residual stream."""
    logs = _read_logs(args.logs)
    dataset = make_dataset(
        logs,
        knot_spacing=config.collection.knot_spacing,
        stream=args.stream,
        gravity=config.vehicle.gravity,
    )
    path = dataset.save_csv(_out_dir(args) / "dataset.csv")
    print(f"Labelled {len(dataset)} samples -> {path}")
    return 0


def cmd_train(args: argparse.Namespace, config: ScenarioConfig) -> int:
    """Train the residual network."""
    dataset = TrainingDataset.load_csv(args.dataset)
    training = config.training
    if args.seed is not None:
        training = training.model_copy(update={"seed": args.seed})
    result = train(dataset, training, raw_labels=args.raw_labels)
    out = _out_dir(args)
    model_path = save_model(result.model, out / ("model_raw.bin" if args.raw_labels else "model.bin"))
    result.save_history(out / ("history_raw.csv" if args.raw_labels else "history.csv"))
    last = result.history.iloc[-1]
    print(f"Model -> {model_path}; final train loss {last['train_loss']:.5f}, "
          f"val loss {last['val_loss']:.5f}")  # fmt: skip
    return 0


def cmd_eval(args: argparse.Namespace, config: ScenarioConfig) -> int:
    """Run the controller x trajectory grid."""
    trials = args.trials if args.trials is not None else config.evaluation.trials
    base_seed = args.seed if args.seed is not None else config.evaluation.base_seed
    controllers = _split(args.controller or GRID_CONTROLLERS)
    if args.model is None and not args.oracle:
        skipped = [c for c in controllers if c in ("ilndi", "na_indi")]
        if skipped:
            logger.warning(f"No --model given, skipping {', '.join(skipped)}")
        controllers = [c for c in controllers if c not in skipped]
    specs = [
        ExperimentSpec(
            controller=controller,
            trajectory=trajectory,
            payload=args.payload,
            trials=trials,
            base_seed=base_seed,
            config=config,
            model_path=args.model,
            oracle_network=args.oracle,
        )
        for controller in controllers
        for trajectory in _split(args.trajectory or GRID_TRAJECTORIES)
    ]
    report = run_grid(specs, workers=args.workers or config.evaluation.workers)
    out = _out_dir(args)
    emit_report(report, "csv", out)
    emit_report(report, "markdown", out)
    if args.plot_data:
        logs = [run_trial(spec, spec.base_seed) for spec in specs]
        emit_report(report, "plot-data", out / "plot-data", logs)
    for cell in report.cells:
        flag = " (crashed)" if cell.crashed else ""
        print(f"{cell.controller:>8} {cell.trajectory:>8}: {cell.mean:.4f} +/- {cell.std:.4f} m{flag}")
    return 1 if args.strict and any(cell.crashed for cell in report.cells) else 0


def cmd_report(args: argparse.Namespace, config: ScenarioConfig) -> int:
    """Render a saved report CSV as markdown."""
    table = read_report_csv(args.report)
    for path in emit_report(table, "markdown", _out_dir(args)):
        print(f"Report -> {path}")
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace, ScenarioConfig], int]] = {
    "sim": cmd_sim,
    "collect": cmd_collect,
    "label": cmd_label,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    """Parser with one subcommand per pipeline stage."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or YAML scenario file")
    common.add_argument("--profile", default="default", help="Comma-separated profiles: default, quick, drag")
    common.add_argument("--out", default="out", help="Output directory (default: out)")
    common.add_argument("--strict", action="store_true", help="Exit nonzero if any flight crashed")
    common.add_argument("--log-level", default="INFO", help="Logging level (default: INFO)")

    parser = argparse.ArgumentParser(prog="quad-lab", description="Quadrotor residual estimation lab")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("sim", parents=[common], help="Fly one trial and write its flight log")
    sim.add_argument("--controller", default="indi", choices=sorted(CONTROLLER_STREAMS))
    sim.add_argument("--trajectory", default="figure8", choices=["circle", "figure8", "helix", "hover"])
    sim.add_argument("--seed", type=int, default=0)

    collect = sub.add_parser("collect", parents=[common], help="Random-waypoint data collection")
    collect.add_argument("--controller", choices=["lee", "indi", "indi_pwm", "true"])
    collect.add_argument("--seed", type=int, help="Seed of the first flight")

    label = sub.add_parser("label", parents=[common], help="Spline-label logged residual estimates")
    label.add_argument("logs", help="Directory of flight log CSV files")
    label.add_argument("--stream", default="indi", help="Residual stream used as label (default: indi)")

    training = sub.add_parser("train", parents=[common], help="Train the residual network")
    training.add_argument("dataset", help="Dataset CSV written by label")
    training.add_argument("--seed", type=int, help="Initialisation and shuffling seed")
    training.add_argument("--raw-labels", action="store_true", help="Train on unsmoothed labels")

    evaluate = sub.add_parser("eval", parents=[common], help="Run the controller x trajectory grid")
    evaluate.add_argument("--controller", help=f"Comma-separated controllers (default: {GRID_CONTROLLERS})")
    evaluate.add_argument("--trajectory", help=f"Comma-separated trajectories (default: {GRID_TRAJECTORIES})")
    evaluate.add_argument("--trials", type=int, help="Trials per cell")
    evaluate.add_argument("--seed", type=int, help="Seed of the first trial")
    evaluate.add_argument("--workers", type=int, help="Parallel worker processes")
    evaluate.add_argument("--plot-data", action="store_true", help="Also write per-tick traces of the first trial")

    report = sub.add_parser("report", parents=[common], help="Render a report CSV as markdown")
    report.add_argument("report", help="report.csv written by eval")

    for stage in (sim, collect, evaluate):
        stage.add_argument("--payload", action="store_true", help="Fly with the cable-suspended payload")
    for stage in (sim, evaluate):
        stage.add_argument("--model", help="Network model file for ilndi and na_indi")
        stage.add_argument("--oracle", action="store_true", help="Use the true residual in place of the network")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = build_config(args)
        return COMMANDS[args.command](args, config)
    except (ValueError, RuntimeError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
