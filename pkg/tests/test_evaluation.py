"""Tests for closed-loop flights, the error metric and the grid runner."""

import numpy as np
import pytest

from quad_residual_lab.config import Profiles
from quad_residual_lab.evaluation import (
    HARDWARE_REFERENCE,
    REPORT_COLUMNS,
    CellResult,
    ErrorReport,
    ExperimentSpec,
    collect_flights,
    fly,
    mean_distance,
    run_grid,
    run_trial,
    tracking_error,
)
from quad_residual_lab.flight_log import FlightLog
from quad_residual_lab.learning import MlpModel, make_dataset, save_model
from quad_residual_lab.mathcore import E_Z, vec3
from quad_residual_lab.trajectory import FlatTrajectory, make_shape


def _hover(duration=1.0):
    return make_shape("hover", (0.0,), 1.0, duration, center=(0.0, 0.0, 1.0))


class _FreeFall(FlatTrajectory):
    duration = 1.0

    def derivatives(self, t):
        result = np.zeros((5, 3))
        result[0] = vec3(0.0, 0.0, 1.0)
        result[2] = -9.81 * E_Z
        return result


@pytest.fixture
def brief_config(short_config):
    """Short circle with a one-second ramp."""
    return Profiles.combine(
        short_config,
        {"trajectories": {"ramp_time": 1.0, "shapes": {"circle": {"duration": 3.0}}}},
    )


class TestMetric:
    """Test mean_distance() and tracking_error()."""

    def test_three_four_five(self):
        """A constant (3, 4, 0) offset has error 5."""
        reference = np.zeros((10, 3))
        actual = np.tile(vec3(3.0, 4.0, 0.0), (10, 1))
        assert mean_distance(actual, reference) == pytest.approx(5.0)

    def test_mean_over_ticks(self):
        """The error is averaged over ticks."""
        actual = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 2.0]])
        assert mean_distance(actual, np.zeros((2, 3))) == pytest.approx(1.0)

    def test_empty(self):
        """An empty series has no error."""
        with pytest.raises(ValueError):
            mean_distance(np.zeros((0, 3)), np.zeros((0, 3)))

    def test_payload_target(self, make_log):
        """Payload flights are scored on the payload position."""
        log = make_log(ticks=20, payload=True)
        log.metadata["target"] = "payload"
        assert tracking_error(log) == pytest.approx(0.5)
        assert tracking_error(log, target="vehicle") == pytest.approx(0.0, abs=1e-12)


class TestFly:
    """Test fly()."""

    def test_hover_is_exact(self, config):
        """With an exact model and no noise, hover has no tracking error."""
        log = fly(config, _hover(), "lee")
        assert not log.crashed
        assert tracking_error(log) < 1e-6
        assert len(log) == 501

    def test_all_streams_logged(self, config):
        """Every stream except the plain one is logged at every tick."""
        log = fly(config, _hover(0.2), "indi", oracle_network=True)
        assert set(log.residuals) == {"true", "indi", "indi_pwm", "indi_raw", "nn", "na_indi"}
        log.check_uniform()

    def test_metadata(self, config):
        """The log records how it was flown."""
        log = fly(config, _hover(0.1), "indi", seed=4, metadata={"note": "x"})
        assert log.metadata["controller"] == "indi"
        assert log.metadata["seed"] == 4
        assert log.metadata["note"] == "x"
        assert log.metadata["crashed"] is False

    def test_seeded(self):
        """The same seed reproduces a noisy flight exactly."""
        config = Profiles.drag()
        traj = make_shape("circle", (0.8,), 1.7, 1.5, ramp_time=0.5)
        a = fly(config, traj, "indi", seed=3)
        b = fly(config, traj, "indi", seed=3)
        np.testing.assert_array_equal(a.position, b.position)
        np.testing.assert_array_equal(a.residual("indi"), b.residual("indi"))

    def test_crash_distance(self):
        """Leaving the crash distance stops the flight and marks it crashed."""
        tight = Profiles.combine(Profiles.drag(), {"evaluation": {"crash_distance": 1e-3}})
        traj = make_shape("circle", (0.8,), 1.7, 3.0, ramp_time=0.5)
        log = fly(tight, traj, "lee")
        assert log.crashed
        assert "tracking error" in log.metadata["crash_reason"]
        assert len(log) < 1501

    def test_unstable_gains_crash(self):
        """An attitude loop with far too much stiffness and no damping loses the vehicle."""
        stiff = {"gains": {"kr": (1.0, 1.0, 1.0), "kw": (1e-7, 1e-7, 1e-7)}}
        unstable = Profiles.combine(Profiles.drag(), stiff)
        traj = make_shape("circle", (0.8,), 1.7, 5.0, ramp_time=0.5)
        log = fly(unstable, traj, "lee")
        assert log.crashed
        assert log.metadata["crash_reason"]
        assert len(log) < 2501

    def test_free_fall_reference_at_start(self, config):
        """A reference that starts in free fall yields an empty crashed log."""
        log = fly(config, _FreeFall(), "lee")
        assert log.crashed
        assert len(log) == 0
        assert "controller" in log.metadata["crash_reason"]

    def test_sensors_arrive_one_tick_late(self, config, params):
        """The estimate at tick k only sees the sensors sampled at tick k - 1."""
        push = [0.01, 0.0, 0.0, 0.0, 0.0, 0.0]
        stepped = Profiles.combine(
            config,
            {
                "residual": {
                    "kind": "scripted",
                    "script_times": [0.0, 0.1011, 0.1012, 1.0],
                    "script_values": [[0.0] * 6, [0.0] * 6, push, push],
                }
            },
        )
        log = fly(stepped, _hover(0.2), "lee")
        first_true = int(np.argmax(np.abs(log.residual("true")[:, 0]) > 5e-3))
        first_raw = int(np.argmax(np.abs(log.residual("indi_raw")[:, 0]) > 5e-3))
        assert first_true == 51
        assert first_raw == 52
        assert abs(log.accel[51, 0]) < 1e-3
        assert log.accel[52, 0] == pytest.approx(0.01 / params.mass, rel=1e-2)

    def test_network_controller_needs_model(self, config):
        """A network controller without model or oracle is refused."""
        with pytest.raises(ValueError, match="network"):
            fly(config, _hover(0.1), "ilndi")

    def test_payload_hover(self, config):
        """A hanging payload held at its reference stays there."""
        log = fly(config, _hover(), "indi", payload=True)
        assert not log.crashed
        assert log.metadata["target"] == "payload"
        assert tracking_error(log) < 1e-3
        np.testing.assert_allclose(log.position[0], vec3(0, 0, 1.5))


class TestExperimentSpec:
    """Test ExperimentSpec validation."""

    def test_seeds(self):
        """Trials use consecutive seeds from the base seed."""
        assert ExperimentSpec("lee", "circle", trials=3, base_seed=10).seeds() == [10, 11, 12]

    def test_unknown_controller(self):
        """Unknown controllers are rejected."""
        with pytest.raises(ValueError, match="Unknown controller"):
            ExperimentSpec("pid", "circle")

    def test_network_needs_model(self, tmp_path):
        """Network controllers need an existing model file unless the oracle is used."""
        with pytest.raises(ValueError, match="model file"):
            ExperimentSpec("na_indi", "circle")
        with pytest.raises(ValueError):
            ExperimentSpec("ilndi", "circle", model_path=str(tmp_path / "missing.bin"))
        ExperimentSpec("ilndi", "circle", oracle_network=True)
        path = save_model(MlpModel.initialize(), tmp_path / "model.bin")
        ExperimentSpec("ilndi", "circle", model_path=str(path))

    def test_trials(self):
        """At least one trial is needed."""
        with pytest.raises(ValueError):
            ExperimentSpec("lee", "circle", trials=0)


class TestAggregation:
    """Test CellResult and ErrorReport."""

    def test_sample_std(self):
        """Spread is the sample standard deviation."""
        cell = CellResult("lee", "circle", False, [0, 1, 2], [1.0, 2.0, 3.0], [False] * 3)
        assert cell.mean == pytest.approx(2.0)
        assert cell.std == pytest.approx(1.0)

    def test_single_trial_has_zero_std(self):
        """One trial has no spread."""
        assert CellResult("lee", "circle", False, [0], [0.3], [False]).std == 0.0

    def test_frame(self):
        """The report table has one row per cell and counts crashes."""
        report = ErrorReport(
            [
                CellResult("lee", "circle", False, [0, 1], [0.1, 0.3], [False, True]),
                CellResult("indi", "circle", False, [0, 1], [0.05, 0.05], [False, False]),
            ]
        )
        frame = report.to_frame()
        assert list(frame.columns) == REPORT_COLUMNS
        assert frame.loc[0, "crashed_trials"] == 1
        assert bool(frame.loc[0, "crashed"])
        assert report.cell("indi", "circle").mean == pytest.approx(0.05)
        assert report.cell("indi", "helix") is None

    def test_hardware_reference_covers_grid(self):
        """Published results exist for every controller and shape without payload."""
        for controller in ("lee", "indi_pwm", "indi", "ilndi", "na_indi"):
            for trajectory in ("circle", "figure8", "helix"):
                assert (controller, trajectory, False) in HARDWARE_REFERENCE


class TestRunners:
    """Test run_trial(), run_grid() and collect_flights()."""

    @pytest.mark.slow
    def test_run_trial_loads_model(self, brief_config, tmp_path):
        """A model path in the cell is loaded for the network stream."""
        path = save_model(MlpModel.initialize(seed=1), tmp_path / "model.bin")
        spec = ExperimentSpec("ilndi", "hover", trials=1, config=brief_config, model_path=str(path))
        log = run_trial(spec, seed=0)
        assert "nn" in log.residuals

    @pytest.mark.slow
    def test_grid_single_trial(self, brief_config):
        """One trial per cell gives zero spread and the cell error."""
        report = run_grid([ExperimentSpec("lee", "circle", trials=1, config=brief_config)])
        cell = report.cell("lee", "circle")
        assert cell.std == 0.0
        assert cell.seeds == [1000]
        log = run_trial(ExperimentSpec("lee", "circle", trials=1, config=brief_config), 1000)
        assert cell.mean == pytest.approx(tracking_error(log))

    @pytest.mark.slow
    def test_grid_is_seed_ordered(self, brief_config):
        """Trials are reported in seed order for both runner modes."""
        spec = ExperimentSpec("indi", "circle", trials=2, base_seed=5, config=brief_config)
        serial = run_grid([spec])
        pooled = run_grid([spec], workers=2)
        assert serial.cells[0].seeds == [5, 6]
        assert pooled.cells[0].errors == serial.cells[0].errors

    @pytest.mark.slow
    def test_collect_flights(self, tmp_path):
        """Collection writes one CSV log per waypoint flight."""
        config = Profiles.combine(Profiles.default(), {"collection": {"flights": 2, "flight_duration": 2.0}})
        logs = collect_flights(config, out_dir=tmp_path)
        assert len(logs) == 2
        assert sorted(p.name for p in tmp_path.glob("*.csv")) == ["flight_000.csv", "flight_001.csv"]
        loaded = FlightLog.load_csv(tmp_path / "flight_001.csv")
        assert loaded.metadata["flight"] == 1
        assert loaded.metadata["trajectory"] == "waypoints"

    @pytest.mark.slow
    def test_default_collection_does_not_crash(self):
        """Both default waypoint flights finish and label into at least 50k samples."""
        config = Profiles.drag()
        logs = collect_flights(config)
        assert [log.crashed for log in logs] == [False, False]
        assert all(len(log) >= 30001 for log in logs)
        dataset = make_dataset(logs, knot_spacing=config.collection.knot_spacing)
        assert len(dataset) >= 50_000


@pytest.mark.slow
class TestClosedLoop:
    """Closed-loop comparisons under quadratic drag."""

    @pytest.fixture
    def drag_config(self, short_config):
        """Short shapes with quadratic drag."""
        return Profiles.combine(short_config, Profiles.drag().model_dump(exclude_defaults=True))

    def test_indi_beats_plain_geometric(self, drag_config):
        """Residual compensation lowers the circle error under drag."""
        lee = tracking_error(run_trial(ExperimentSpec("lee", "circle", config=drag_config), 1000))
        indi = tracking_error(run_trial(ExperimentSpec("indi", "circle", config=drag_config), 1000))
        assert indi < lee

    def test_true_residual_is_a_lower_bound(self, drag_config):
        """Feeding the exact residual tracks at least as well as plain geometric control."""
        lee = tracking_error(run_trial(ExperimentSpec("lee", "circle", config=drag_config), 1000))
        true = tracking_error(run_trial(ExperimentSpec("true", "circle", config=drag_config), 1000))
        assert true < lee


@pytest.mark.slow
class TestDragScenario:
    """Error levels on the full test shapes."""

    def _error(self, config, controller, trajectory, seed=1000):
        return tracking_error(run_trial(ExperimentSpec(controller, trajectory, config=config), seed))

    @pytest.mark.parametrize("trajectory", ["circle", "figure8"])
    def test_drag_degrades_plain_geometric(self, trajectory):
        """Under the drag profile the plain geometric controller lags by at least 5 cm."""
        assert self._error(Profiles.drag(), "lee", trajectory) >= 0.05

    @pytest.mark.parametrize("trajectory", ["circle", "figure8"])
    def test_pwm_ablation_is_worse(self, trajectory):
        """Ignoring the motor lag makes the residual estimate, and the tracking, worse."""
        config = Profiles.drag()
        assert self._error(config, "indi_pwm", trajectory) > self._error(config, "indi", trajectory)

    def test_exact_model_figure8(self, config):
        """With an exact model and clean sensors the figure8 is tracked within 1 cm."""
        log = run_trial(ExperimentSpec("lee", "figure8", config=config), 1000)
        assert not log.crashed
        assert tracking_error(log) < 0.01
