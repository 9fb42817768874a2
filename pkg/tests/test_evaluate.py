import math

import numpy as np
import pytest

import sfmotion as sf
from sfmotion.cloud import TargetFrame
from sfmotion.errors import EmptyInputError
from sfmotion.evaluate import (TruthSeries, evaluate_motion,
                               period_relative_error, read_truth_csv, rmse,
                               truth_from_config)
from sfmotion.geometry import rot_z
from sfmotion.motion import ScaleReference, estimate_motion
from sfmotion.rigidbody import truth_csv_text



class TestRmse:
    def test_identical_series(self):
        assert rmse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_constant_offset(self):
        a = np.arange(10.0)
        assert math.isclose(rmse(a + 1.0, a), 1.0)

    def test_hand_example(self):
        assert math.isclose(rmse([1, 2, 3], [1, 2, 5]),
                            math.sqrt(4.0 / 3.0))

    def test_empty_is_error(self):
        with pytest.raises(EmptyInputError):
            rmse([], [])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rmse([1.0], [1.0, 2.0])


class TestPeriodRelativeError:
    def test_equal_periods(self):
        assert period_relative_error(10.0, 10.0) == 0.0

    def test_reported_error_magnitude(self):
        # 376.16 s fit against the 376.0 s truth ~ 0.043 %
        err = period_relative_error(376.16, 376.0)
        assert abs(err - 0.043) < 5e-4

    def test_double(self):
        assert math.isclose(period_relative_error(2.0, 1.0), 100.0)

    def test_rejects_nonpositive_truth(self):
        with pytest.raises(ValueError):
            period_relative_error(1.0, 0.0)


class TestTruthSeries:
    def test_csv_round_trip(self, tumble3d_states):
        series = TruthSeries.from_states(tumble3d_states)
        back = read_truth_csv(truth_csv_text(tumble3d_states))
        assert np.abs(back.time - series.time).max() < 1e-9
        assert np.abs(back.omega - series.omega).max() < 1e-10
        assert np.abs(back.position - series.position).max() < 1e-6

    def test_interpolation_midpoint(self):
        states = [
            sf.RigidBodyState(rot_z(0.0), np.array([0.0, 0, 1.0]),
                              np.zeros(3), np.array([1.0, 0, 0]), 0.0),
            sf.RigidBodyState(rot_z(1.0), np.array([0.0, 0, 2.0]),
                              np.array([10.0, 0, 0]),
                              np.array([1.0, 0, 0]), 10.0),
        ]
        mid = TruthSeries.from_states(states).at([5.0])
        assert sf.Rotation(mid.quat[0]).angle_to(rot_z(0.5)) < 1e-12
        assert np.allclose(mid.omega[0], [0, 0, 1.5])
        assert np.allclose(mid.position[0], [5.0, 0, 0])

    def test_out_of_span_rejected(self, tumble3d_states):
        series = TruthSeries.from_states(tumble3d_states)
        with pytest.raises(ValueError):
            series.at([1e6])

    def test_config_resampling_matches_samples(self, tumble3d_config,
                                               tumble3d_states):
        picked = [tumble3d_states[i] for i in (0, 7, 40, 300)]
        series = truth_from_config(tumble3d_config,
                                   [s.time for s in picked])
        for i, s in enumerate(picked):
            assert np.abs(series.omega[i] - s.omega).max() < 1e-13
            assert sf.Rotation(series.quat[i]).angle_to(s.attitude) < 1e-12


class TestEvaluateMotion:
    def test_noiseless_report_is_tiny(self, tumble3d_config, tumble3d_trajectory):
        est = estimate_motion(tumble3d_trajectory, TargetFrame.identity(),
                              ScaleReference.unit())
        truth = truth_from_config(tumble3d_config, est.interval_bounds())
        report = evaluate_motion(est, truth)
        assert report.linear_speed_rmse_m_s < 1e-12
        # truth reduced to the same discrete rates: round trip is exact
        assert max(report.omega_rmse_deg_s.values()) < 1e-6
        assert report.period_relative_error_pct["x"] < 1e-6
        assert report.period_relative_error_pct["y"] < 1e-6
        assert "z" not in report.period_relative_error_pct  # flat channel
        assert report.n_estimates == len(est)

    def test_json_excludes_runtime(self, tumble3d_config, tumble3d_trajectory):
        est = estimate_motion(tumble3d_trajectory, TargetFrame.identity(),
                              ScaleReference.unit())
        truth = truth_from_config(tumble3d_config, est.interval_bounds())
        report = evaluate_motion(est, truth)
        assert "runtime" not in report.json_text()

    def test_mismatched_sampling_rejected(self, tumble3d_config,
                                          tumble3d_trajectory):
        est = estimate_motion(tumble3d_trajectory, TargetFrame.identity(),
                              ScaleReference.unit())
        truth = truth_from_config(tumble3d_config, est.t_mid)
        with pytest.raises(ValueError):
            evaluate_motion(est, truth)
