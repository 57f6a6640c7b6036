"""Tests for reference trajectories and the flatness expansion."""

import numpy as np
import pytest

from quad_residual_lab.config import Profiles
from quad_residual_lab.mathcore import E_Z, vec3
from quad_residual_lab.trajectory import (
    SMOOTHSTEP_PEAK_SLOPE,
    FlatTrajectory,
    ShapeTrajectory,
    SingularReferenceError,
    WaypointTrajectory,
    export_trajectory_csv,
    flat_expand,
    load_trajectory_csv,
    make_random_waypoints,
    make_shape,
    shape_from_config,
    waypoints_from_config,
)


class _FreeFall(FlatTrajectory):
    duration = 1.0

    def derivatives(self, t):
        result = np.zeros((5, 3))
        result[2] = -9.81 * E_Z
        return result


def _central_difference(traj, t, order, h=1e-4):
    return (traj.derivatives(t + h)[order] - traj.derivatives(t - h)[order]) / (2 * h)


class TestShapes:
    """Test the ramped test shapes."""

    def test_starts_and_ends_at_rest(self):
        """Velocity, acceleration and jerk vanish at both ends."""
        traj = make_shape("figure8", (1.0, 0.6), 1.7, 12.0)
        for t in (0.0, traj.duration):
            np.testing.assert_allclose(traj.derivatives(t)[1:4], np.zeros((3, 3)), atol=1e-12)

    def test_circle_cruise_speed(self):
        """Cruise speed on the circle equals the configured speed."""
        traj = make_shape("circle", (0.8,), 1.7, 10.0)
        for t in np.linspace(2.5, 7.5, 11):
            assert np.linalg.norm(traj.velocity(t)) == pytest.approx(1.7, rel=1e-12)
            assert np.linalg.norm(traj.position(t) - traj.center) == pytest.approx(0.8, rel=1e-12)

    def test_figure8_peak_speed(self):
        """Figure-eight speed never exceeds the configured peak and reaches it."""
        traj = make_shape("figure8", (1.0, 0.6), 1.7, 12.0)
        speeds = [np.linalg.norm(traj.velocity(t)) for t in np.linspace(0, 12, 2401)]
        assert max(speeds) <= 1.7 + 1e-9
        assert max(speeds) == pytest.approx(1.7, rel=1e-3)

    def test_helix_climbs_configured_height(self):
        """The helix climbs the configured height over the flight."""
        traj = make_shape("helix", (0.6, 0.6), 1.6, 10.0)
        climb = traj.position(traj.duration)[2] - traj.position(0.0)[2]
        assert climb == pytest.approx(0.6, rel=1e-9)

    @pytest.mark.parametrize("kind,size", [("circle", (0.8,)), ("figure8", (1.0, 0.6)), ("helix", (0.6, 0.6))])
    def test_derivatives_are_consistent(self, kind, size):
        """Each derivative matches a central difference of the previous one."""
        traj = make_shape(kind, size, 1.5, 8.0)
        for t in (0.7, 1.9, 4.0, 6.5):
            for order in range(1, 5):
                np.testing.assert_allclose(
                    traj.derivatives(t)[order], _central_difference(traj, t, order - 1), atol=2e-4 * 10**order
                )

    def test_hover_is_constant(self):
        """The hover shape holds its centre with zero derivatives."""
        traj = make_shape("hover", (0.0,), 1.0, 5.0, center=(1.0, 2.0, 3.0))
        np.testing.assert_array_equal(traj.position(2.0), vec3(1, 2, 3))
        np.testing.assert_array_equal(traj.derivatives(2.0)[1:], np.zeros((4, 3)))

    def test_invalid_dimensions(self):
        """Non-positive sizes and unknown kinds are rejected."""
        with pytest.raises(ValueError):
            make_shape("circle", (0.0,), 1.0, 5.0)
        with pytest.raises(ValueError):
            make_shape("square", (1.0,), 1.0, 5.0)
        with pytest.raises(ValueError):
            make_shape("circle", (1.0,), 1.0, -5.0)

    def test_shape_from_config_payload_speed(self, config):
        """Payload flights use the slower payload speed."""
        assert shape_from_config(config, "figure8").speed == pytest.approx(1.7)
        assert shape_from_config(config, "figure8", payload=True).speed == pytest.approx(1.2)
        assert isinstance(shape_from_config(config, "hover"), ShapeTrajectory)
        with pytest.raises(ValueError):
            shape_from_config(config, "spiral")


class TestWaypoints:
    """Test random minimum-snap waypoint flights."""

    def test_leg_peak_speed_matches_sample(self):
        """No leg is faster than its sampled speed, and the peak is reached mid-leg."""
        traj = make_random_waypoints((1.6, 1.6, 0.4), (1.0, 3.0), 20.0, seed=3)
        peaks = traj.leg_peak_speeds()
        assert np.all((peaks > 0.0) & (peaks <= 3.0 + 1e-9))
        leg = 0
        mid = traj.breaks[leg] + 0.5 * traj.leg_times[leg]
        assert np.linalg.norm(traj.velocity(mid)) == pytest.approx(peaks[leg], rel=1e-12)

    def test_long_legs_keep_sampled_speed(self):
        """A leg long enough for its speed is timed by distance * 35/16 / speed alone."""
        traj = make_random_waypoints((20.0, 20.0, 0.4), (1.0, 1.0), 20.0, seed=3, min_leg_length=5.0)
        np.testing.assert_allclose(traj.leg_peak_speeds(), 1.0, rtol=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2, 7, 8])
    def test_acceleration_is_capped(self, seed, params):
        """Sampled densely, no flight asks for more than the acceleration cap or the rotor thrust."""
        traj = make_random_waypoints((1.6, 1.6, 0.4), (1.0, 3.0), 60.0, seed=seed, max_acceleration=5.0)
        times = np.linspace(0.0, traj.duration, 20001)
        acceleration = np.array([traj.derivatives(t)[2] for t in times])
        assert np.max(np.linalg.norm(acceleration, axis=1)) <= 5.0 + 1e-9
        thrust = params.mass * np.linalg.norm(acceleration + params.gravity * E_Z, axis=1)
        assert np.max(thrust) < 0.85 * 4 * params.kappa_f * params.rotor_speed_max**2

    def test_minimum_leg_time(self):
        """No leg is shorter than min_leg_time."""
        traj = make_random_waypoints((1.6, 1.6, 0.4), (1.0, 3.0), 30.0, seed=6, min_leg_time=0.7)
        assert np.min(traj.leg_times) >= 0.7

    def test_invalid_limits(self):
        """Non-positive acceleration caps and leg times are rejected."""
        with pytest.raises(ValueError):
            make_random_waypoints((1.6, 1.6, 0.4), (1.0, 3.0), 10.0, seed=1, max_acceleration=0.0)
        with pytest.raises(ValueError):
            make_random_waypoints((1.6, 1.6, 0.4), (1.0, 3.0), 10.0, seed=1, min_leg_time=-1.0)

    def test_rest_at_waypoints(self):
        """Velocity, acceleration and jerk vanish at every waypoint."""
        traj = make_random_waypoints((1.6, 1.6, 0.4), (1.0, 3.0), 10.0, seed=4)
        for t in traj.breaks:
            np.testing.assert_allclose(traj.derivatives(t)[1:4], np.zeros((3, 3)), atol=1e-6)

    def test_waypoints_inside_box(self):
        """All waypoints lie inside the bounding box."""
        traj = make_random_waypoints((1.6, 1.6, 0.4), (1.0, 3.0), 30.0, seed=5)
        offsets = np.abs(traj.waypoints - vec3(0, 0, 1))
        assert np.all(offsets <= np.array([0.8, 0.8, 0.2]) + 1e-12)

    def test_seeded(self):
        """The same seed gives the same flight."""
        a = make_random_waypoints((1.6, 1.6, 0.4), (1.0, 3.0), 10.0, seed=9)
        b = make_random_waypoints((1.6, 1.6, 0.4), (1.0, 3.0), 10.0, seed=9)
        np.testing.assert_array_equal(a.waypoints, b.waypoints)
        np.testing.assert_array_equal(a.leg_times, b.leg_times)

    def test_leg_time_formula(self):
        """Leg time is distance * 35/16 / speed."""
        points = np.array([[0, 0, 1], [1, 0, 1]], dtype=float)
        traj = WaypointTrajectory(points, [SMOOTHSTEP_PEAK_SLOPE / 2.0])
        assert traj.leg_peak_speeds()[0] == pytest.approx(2.0)

    def test_from_config(self):
        """Payload flights draw from the payload speed range and acceleration cap."""
        config = Profiles.quick()
        traj = waypoints_from_config(config.collection, seed=1, payload=True)
        assert traj.duration >= config.collection.flight_duration
        times = np.linspace(0.0, traj.duration, 5001)
        peak = max(np.linalg.norm(traj.derivatives(t)[2]) for t in times)
        assert peak <= config.collection.payload_max_acceleration + 1e-9
        assert np.all(traj.leg_peak_speeds() <= 2.0 + 1e-9)

    def test_invalid_inputs(self):
        """Bad boxes, speeds and leg times are rejected."""
        with pytest.raises(ValueError):
            make_random_waypoints((1.0, 1.0, 0.0), (1.0, 2.0), 5.0, seed=0)
        with pytest.raises(ValueError):
            make_random_waypoints((1.0, 1.0, 1.0), (1.0, 9.0), 5.0, seed=0)
        with pytest.raises(ValueError):
            WaypointTrajectory(np.zeros((2, 3)), [0.0])


class TestFlatExpand:
    """Test flat_expand()."""

    def test_hover_reference(self):
        """A hover reference expands to identity attitude and zero rates."""
        ref = flat_expand(make_shape("hover", (0.0,), 1.0, 5.0), 1.0)
        np.testing.assert_allclose(ref.rotation, np.eye(3), atol=1e-15)
        np.testing.assert_allclose(ref.angular_velocity, np.zeros(3), atol=1e-15)

    def test_thrust_axis_follows_acceleration(self):
        """Body z is parallel to a + g e_z."""
        traj = make_shape("circle", (0.8,), 1.7, 10.0)
        ref = flat_expand(traj, 5.0)
        thrust = ref.acceleration + 9.81 * E_Z
        np.testing.assert_allclose(ref.rotation[:, 2], thrust / np.linalg.norm(thrust), atol=1e-12)

    def test_rates_match_finite_differences(self):
        """Body rate and acceleration agree with differences of the attitude reference."""
        traj = make_shape("figure8", (1.0, 0.6), 1.7, 12.0)
        h = 1e-4
        for t in (1.0, 3.3, 6.0):
            ref = flat_expand(traj, t)
            before, after = flat_expand(traj, t - h), flat_expand(traj, t + h)
            r_dot = (after.rotation - before.rotation) / (2 * h)
            omega = ref.rotation.T @ r_dot
            np.testing.assert_allclose(
                [omega[2, 1], omega[0, 2], omega[1, 0]], ref.angular_velocity, atol=1e-6
            )
            alpha = (after.angular_velocity - before.angular_velocity) / (2 * h)
            np.testing.assert_allclose(alpha, ref.angular_acceleration, atol=1e-5)

    def test_free_fall_is_singular(self):
        """A reference with zero thrust raises SingularReferenceError."""
        with pytest.raises(SingularReferenceError):
            flat_expand(_FreeFall(), 0.5)


class TestTrajectoryCsv:
    """Test trajectory export."""

    def test_export_and_replay(self, tmp_path):
        """A replayed export reproduces positions at the sample times."""
        traj = make_shape("circle", (0.8,), 1.7, 4.0)
        path = export_trajectory_csv(traj, tmp_path / "circle.csv")
        replay = load_trajectory_csv(path)
        assert replay.duration == pytest.approx(4.0)
        np.testing.assert_array_equal(replay.position(1.0), traj.position(1.0))
