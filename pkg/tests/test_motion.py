import math

import numpy as np
import pytest

import sfmotion as sf
from sfmotion.cloud import TargetFrame
from sfmotion.errors import AliasingError, NoPeriodicityError
from sfmotion.geometry import Rotation, rot_z, so3_exp, so3_log
from sfmotion.motion import (ScaleReference, angular_velocity,
                             estimate_motion, fit_sine, linear_motion,
                             motion_csv_text, period_of, radius_vectors,
                             read_motion_csv, rotation_increments,
                             scale_from_known_length)

from conftest import TUMBLE3D_PERIOD, tumble3d_sim_config


def _traj_from_centers(centers, dt=1.0, rotations=None):
    poses = []
    for i, c in enumerate(centers):
        rot = rotations[i] if rotations is not None else Rotation.identity()
        poses.append(sf.Pose(rot, c, i * dt))
    return sf.PoseTrajectory(tuple(poses), frame_tag="metric")


def _spin_trajectory(theta_per_step, n, cam=(4.0, 0.0, 1.0), dt=1.0):
    """Target spinning +theta about z per step, static inertial camera:
    world-to-camera rotation Rz(k theta), center Rz(-k theta) @ cam."""
    cam = np.array(cam)
    poses = []
    for k in range(n):
        rot = rot_z(k * theta_per_step)
        poses.append(sf.Pose(rot, rot.inverse().apply(cam), k * dt))
    return sf.PoseTrajectory(tuple(poses), frame_tag="metric")


class TestRadiusVectors:
    def test_zero_origin_gives_centers(self):
        traj = _traj_from_centers([[1, 2, 3], [4, 5, 6]])
        assert np.array_equal(radius_vectors(traj, (0, 0, 0)), traj.centers)

    def test_origin_at_first_center(self):
        traj = _traj_from_centers([[1, 2, 3], [4, 5, 6]])
        r = radius_vectors(traj, (1, 2, 3))
        assert np.allclose(r[0], 0.0)

    def test_hand_computed(self):
        traj = _traj_from_centers([[1, 0, 0], [0, 2, 0], [0, 0, -3]])
        r = radius_vectors(traj, (1, 1, 1))
        assert np.allclose(r, [[0, -1, -1], [-1, 1, -1], [-1, -1, -4]])


class TestLinearMotion:
    def test_static_trajectory_is_zero(self):
        traj = _traj_from_centers([[2, 0, 0]] * 5)
        L, speed, vel = linear_motion(traj, (0, 0, 0), ScaleReference.unit())
        assert np.allclose(L, 0.0)
        assert np.allclose(speed, 0.0)
        assert np.allclose(vel, 0.0)

    def test_radially_receding_camera(self):
        traj = _traj_from_centers([[1, 0, 0], [2, 0, 0], [3, 0, 0]])
        L, speed, vel = linear_motion(traj, (0, 0, 0), ScaleReference.unit())
        assert np.allclose(L, 1.0)
        assert np.allclose(speed, 1.0)
        assert np.allclose(vel, [[1, 0, 0], [1, 0, 0]])

    def test_scale_applies_to_speed_not_L(self):
        traj = _traj_from_centers([[1, 0, 0], [2, 0, 0]])
        L, speed, _ = linear_motion(traj, (0, 0, 0), ScaleReference(0.06))
        assert np.allclose(L, 1.0)
        assert np.allclose(speed, 0.06)

    def test_known_edge_scaling_recovers_metric_speed(self):
        # metric scene shrunk into an SfM gauge where a 60 mm edge is 1 unit
        cfg = tumble3d_sim_config(duration=200.0)
        states = sf.simulate(cfg)
        metric = sf.to_camera_trajectory(states,
                                         cfg.camera_position_inertial)
        gauge = 1.0 / 0.06
        poses = [sf.Pose(p.rotation, p.center * gauge, p.timestamp)
                 for p in metric]
        traj = sf.PoseTrajectory(tuple(poses))
        scale = scale_from_known_length((0, 0, 0), (1, 0, 0), 0.06)
        assert math.isclose(scale.scale_c, 0.06)
        _, speed, _ = linear_motion(traj, (0, 0, 0), scale)
        assert np.abs(np.abs(speed) - 0.0045).max() < 1e-9

    def test_nonincreasing_timestamps_rejected(self):
        poses = (sf.Pose(Rotation.identity(), (1, 0, 0), 0.0),
                 sf.Pose(Rotation.identity(), (2, 0, 0), 0.0))
        with pytest.raises(ValueError):
            sf.PoseTrajectory(poses)


class TestScaleFromKnownLength:
    def test_panel_edge(self):
        s = scale_from_known_length((0, 0, 0), (1, 0, 0), 0.06)
        assert math.isclose(s.scale_c, 0.06)

    def test_unit(self):
        s = scale_from_known_length((0, 0, 0), (0, 2, 0), 2.0)
        assert math.isclose(s.scale_c, 1.0)

    def test_half(self):
        s = scale_from_known_length((0, 0, 0), (2, 0, 0), 1.0)
        assert math.isclose(s.scale_c, 0.5)

    def test_coincident_points_rejected(self):
        with pytest.raises(ValueError):
            scale_from_known_length((1, 1, 1), (1, 1, 1), 0.5)


class TestRotationIncrements:
    def test_identical_poses_give_identity(self):
        traj = _traj_from_centers([[1, 0, 0], [1, 0, 0]],
                                  rotations=[rot_z(0.3), rot_z(0.3)])
        inc = rotation_increments(traj)
        assert inc[0].angle_to(Rotation.identity()) < 1e-15

    def test_positive_spin_recovers_positive_angle(self):
        theta = math.radians(5.0)
        traj = _spin_trajectory(theta, 8)
        for inc in rotation_increments(traj):
            assert np.allclose(so3_log(inc), [0.0, 0.0, theta], atol=1e-12)

    def test_spherical_simulator_round_trip(self):
        w = 0.11
        cam = np.array([3.0, 0.5, 0.0])
        cfg = sf.SimConfig(
            initial=sf.RigidBodyState(Rotation.identity(),
                                      np.array([0, 0, w]), np.zeros(3),
                                      np.zeros(3), 0.0),
            inertia=sf.InertiaModel(1, 1, 1), duration=20.0,
            sample_interval=2.0, integrator_dt=0.02,
            camera_position_inertial=cam)
        traj = sf.to_camera_trajectory(sf.simulate(cfg), cam)
        for inc in rotation_increments(traj):
            assert abs(np.linalg.norm(so3_log(inc)) - w * 2.0) < 1e-9

    def test_eq_consistency_inverse_maps_next_frame(self):
        # R(Phi)^-1 . (cam->body at t) == (cam->body at t+1)
        traj = _spin_trajectory(0.2, 6)
        incs = rotation_increments(traj)
        for inc, a, b in zip(incs, traj.poses, traj.poses[1:]):
            lhs = inc.inverse() @ a.rotation.inverse()
            rhs = b.rotation.inverse()
            assert np.abs(lhs.matrix - rhs.matrix).max() < 1e-12


class TestAngularVelocity:
    def test_identity_increments_zero_rate(self):
        incs = [Rotation.identity()] * 4
        w = angular_velocity(incs, np.arange(5.0))
        assert np.allclose(w, 0.0)

    def test_arithmetic(self):
        incs = [rot_z(math.radians(120.0))]
        w = angular_velocity(incs, [0.0, 10.0])
        assert np.allclose(np.degrees(w), [[0, 0, 12.0]], atol=1e-12)

    def test_aliasing_error_names_interval(self):
        incs = [rot_z(0.1), rot_z(math.pi - 1e-9)]
        with pytest.raises(AliasingError) as exc:
            angular_velocity(incs, [0.0, 1.0, 2.0])
        assert exc.value.interval == 1

    def test_symmetric_top_matches_analytic(self):
        cfg = tumble3d_sim_config(duration=3000.0)
        states = sf.simulate(cfg)
        traj = sf.to_camera_trajectory(states,
                                       cfg.camera_position_inertial)
        w = angular_velocity(rotation_increments(traj), traj.timestamps)
        wdeg = np.degrees(w)
        assert np.abs(wdeg[:, 2] - 1.0).max() < 1e-4
        fit = fit_sine(0.5 * (traj.timestamps[:-1] + traj.timestamps[1:]),
                       w[:, 0])
        assert abs(period_of(fit) - TUMBLE3D_PERIOD) / TUMBLE3D_PERIOD < 1e-6


class TestFitSine:
    def test_exact_recovery(self):
        t = np.linspace(0.0, 40.0, 100)
        y = 2.0 * np.sin(0.5 * t + 0.3) + 0.1
        fit = fit_sine(t, y)
        assert abs(fit.amplitude - 2.0) < 1e-6
        assert abs(fit.angular_frequency - 0.5) < 1e-6
        assert abs(fit.phase - 0.3) < 1e-6
        assert abs(fit.offset - 0.1) < 1e-6
        assert fit.rmse_residual < 1e-9 * fit.amplitude

    def test_noisy_frequency_within_0p1_percent(self):
        t = np.linspace(0.0, 40.0, 100)
        clean = 2.0 * np.sin(0.5 * t + 0.3) + 0.1
        errs = []
        for seed in range(5):
            y = clean + np.random.default_rng(seed).normal(0, 0.05, len(t))
            fit = fit_sine(t, y)
            errs.append(abs(fit.angular_frequency - 0.5) / 0.5)
        assert np.mean(errs) < 1e-3

    def test_flat_signal_is_error(self):
        with pytest.raises(NoPeriodicityError):
            fit_sine(np.arange(20.0), np.full(20, 3.25))

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            fit_sine(np.arange(5.0), np.sin(np.arange(5.0)))

    def test_negative_amplitude_normalized(self):
        t = np.linspace(0.0, 30.0, 90)
        y = -1.5 * np.sin(0.7 * t)  # = 1.5 sin(0.7 t + pi)
        fit = fit_sine(t, y)
        assert fit.amplitude > 0
        assert abs(fit.amplitude - 1.5) < 1e-6
        assert abs(abs(fit.phase) - math.pi) < 1e-6

    def test_period_of(self):
        assert math.isclose(
            period_of(sf.SineFit(1.0, 2.0 * math.pi, 0.0, 0.0, 0.0)), 1.0)
        assert math.isclose(
            period_of(sf.SineFit(1.0, math.pi, 0.0, 0.0, 0.0)), 2.0)
        assert abs(period_of(sf.SineFit(1.0, 0.0167, 0.0, 0.0, 0.0))
                   - 376.24) < 0.2


class TestEstimateMotion:
    def test_static_trajectory_all_zero(self):
        traj = _traj_from_centers([[2.0, 1.0, 0.0]] * 10)
        est = estimate_motion(traj, TargetFrame.identity(),
                              ScaleReference.unit())
        assert np.allclose(est.omega, 0.0)
        assert np.allclose(est.velocity, 0.0)
        assert np.allclose(est.norm_change, 0.0)
        assert all(v is None for v in est.sine_fits.values())

    def test_tumble3d_scenario_speed(self, tumble3d_trajectory):
        est = estimate_motion(tumble3d_trajectory, TargetFrame.identity(),
                              ScaleReference.unit())
        assert np.abs(est.speed - 0.0045).max() < 1e-6

    def test_gauge_invariance(self, tumble3d_trajectory):
        frame = TargetFrame.identity()
        base = estimate_motion(tumble3d_trajectory, frame,
                               ScaleReference.unit())
        g = so3_exp((0.4, -0.9, 0.2))
        s = 3.7
        poses = [sf.Pose(p.rotation @ g.inverse(),
                         s * g.apply(p.center), p.timestamp)
                 for p in tumble3d_trajectory]
        gauge_traj = sf.PoseTrajectory(tuple(poses))
        gauge_frame = TargetFrame(origin=s * g.apply(frame.origin),
                                  axes=g @ frame.axes)
        est = estimate_motion(gauge_traj, gauge_frame,
                              ScaleReference(1.0 / s))
        assert np.abs(est.omega - base.omega).max() < 1e-9
        assert np.abs(est.norm_change - s * base.norm_change).max() < 1e-9
        assert np.abs(est.velocity - base.velocity).max() < 1e-9

    def test_time_reversal_negates_rates(self):
        cfg = tumble3d_sim_config(duration=300.0)
        traj = sf.to_camera_trajectory(sf.simulate(cfg),
                                       cfg.camera_position_inertial)
        t_max = traj.timestamps[-1]
        rev = sf.PoseTrajectory(tuple(
            sf.Pose(p.rotation, p.center, t_max - p.timestamp)
            for p in reversed(traj.poses)))
        fwd = estimate_motion(traj, TargetFrame.identity(),
                              ScaleReference.unit())
        bwd = estimate_motion(rev, TargetFrame.identity(),
                              ScaleReference.unit())
        assert np.abs(bwd.omega + fwd.omega[::-1]).max() < 1e-12
        assert np.abs(bwd.norm_change + fwd.norm_change[::-1]).max() < 1e-12

    def test_frame_axes_reexpress_omega(self):
        theta = math.radians(3.0)
        traj = _spin_trajectory(theta, 10)
        # frame whose x axis is the world z: spin must appear on x
        axes = Rotation.from_matrix(np.array([[0.0, 0, 1],
                                              [0, 1, 0],
                                              [-1, 0, 0]]).T)
        frame = TargetFrame(origin=np.zeros(3), axes=axes)
        est = estimate_motion(traj, frame, ScaleReference.unit())
        assert np.allclose(est.omega[:, 0], theta, atol=1e-12)
        assert np.allclose(est.omega[:, 1:], 0.0, atol=1e-12)

    def test_camera_axes_conversion_matches_truth_attitude(
            self, tumble3d_states, tumble3d_trajectory):
        from sfmotion.motion import omega_in_camera_axes
        est = estimate_motion(tumble3d_trajectory, TargetFrame.identity(),
                              ScaleReference.unit())
        w_cam = omega_in_camera_axes(tumble3d_trajectory,
                                     TargetFrame.identity(), est.omega)
        # static camera axes == inertial axes: compare with attitude-mapped
        # body rates at the interval start
        for i, s in enumerate(tumble3d_states[:-1]):
            expected = s.attitude.apply(est.omega[i])
            assert np.abs(w_cam[i] - expected).max() < 1e-12

    def test_csv_round_trip(self, tumble3d_trajectory):
        est = estimate_motion(tumble3d_trajectory, TargetFrame.identity(),
                              ScaleReference.unit())
        back = read_motion_csv(motion_csv_text(est))
        # 9 significant digits in the CSV bound the round-trip error
        assert np.abs(back["omega"] - est.omega).max() < 1e-10
        assert np.abs(back["radial_speed"] - est.radial_speed).max() < 1e-11
        assert len(back["t_mid"]) == len(est)
