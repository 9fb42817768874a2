"""Comparison of motion estimates against ground truth.

Truth comes either from a SimConfig (re-integrated exactly at the estimate
timestamps with the simulator's own RK4; no interpolation error) or from a
ground-truth CSV, in which case attitude is slerped and the remaining
channels interpolated linearly between samples.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInputError, SchemaError
from .geometry import Rotation, slerp, so3_log
from .motion import MotionEstimate, SineFit, fit_sine, period_of
from .rigidbody import TRUTH_CSV_HEADER, SimConfig, states_at


@dataclass(frozen=True)
class TruthSeries:
    """Ground-truth state samples, column arrays aligned on time."""

    time: np.ndarray        # (N,)
    quat: np.ndarray        # (N, 4) body->inertial, scalar first
    omega: np.ndarray       # (N, 3) body frame, rad/s
    position: np.ndarray    # (N, 3) m
    velocity: np.ndarray    # (N, 3) m/s

    def __len__(self) -> int:
        return len(self.time)

    @classmethod
    def from_states(cls, states) -> "TruthSeries":
        states = list(states)
        return cls(
            time=np.array([s.time for s in states]),
            quat=np.stack([s.attitude.quat for s in states]),
            omega=np.stack([s.omega for s in states]),
            position=np.stack([s.position for s in states]),
            velocity=np.stack([s.velocity for s in states]),
        )

    def at(self, times) -> "TruthSeries":
        """Resample by interpolation: slerp attitude, linear elsewhere."""
        t = np.asarray(times, dtype=np.float64)
        if np.any(t < self.time[0] - 1e-9) or np.any(t > self.time[-1] + 1e-9):
            raise ValueError("requested times fall outside the truth span")
        quat = np.empty((len(t), 4))
        for i, ti in enumerate(t):
            j = int(np.clip(np.searchsorted(self.time, ti) - 1, 0,
                            len(self.time) - 2))
            span = self.time[j + 1] - self.time[j]
            alpha = 0.0 if span <= 0 else (ti - self.time[j]) / span
            quat[i] = slerp(Rotation(self.quat[j]),
                            Rotation(self.quat[j + 1]),
                            float(np.clip(alpha, 0.0, 1.0))).quat
        interp = lambda col: np.column_stack([
            np.interp(t, self.time, col[:, k]) for k in range(col.shape[1])])
        return TruthSeries(time=t, quat=quat, omega=interp(self.omega),
                           position=interp(self.position),
                           velocity=interp(self.velocity))


def truth_from_config(config: SimConfig, times) -> TruthSeries:
    """Exact truth at arbitrary times via RK4 dense output."""
    return TruthSeries.from_states(states_at(config, times))


def read_truth_csv(text: str) -> TruthSeries:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise EmptyInputError("truth CSV is empty")
    if lines[0] != TRUTH_CSV_HEADER:
        raise SchemaError(f"expected header '{TRUTH_CSV_HEADER}', "
                          f"got {lines[0]!r}")
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if rows.ndim != 2 or rows.shape[1] != 14:
        raise SchemaError("truth CSV rows must have 14 columns")
    return TruthSeries(time=rows[:, 0], quat=rows[:, 1:5],
                       omega=rows[:, 5:8], position=rows[:, 8:11],
                       velocity=rows[:, 11:14])


# ---------------------------------------------------------------------------
# metrics

def rmse(estimates, truth) -> float:
    """Root mean square difference between two aligned series."""
    a = np.asarray(estimates, dtype=np.float64).ravel()
    b = np.asarray(truth, dtype=np.float64).ravel()
    if a.size == 0:
        raise EmptyInputError("cannot take the RMSE of empty series")
    if a.shape != b.shape:
        raise ValueError(f"series lengths differ: {a.shape} vs {b.shape}")
    d = a - b
    return math.sqrt(float(d @ d) / a.size)


def period_relative_error(fit_period: float, true_period: float) -> float:
    """Percent deviation of the fitted period from the true one."""
    if true_period <= 0.0:
        raise ValueError("true_period must be positive")
    return 100.0 * abs(fit_period - true_period) / true_period


@dataclass(frozen=True)
class EvalReport:
    """Estimator accuracy against ground truth.

    runtime_seconds is informational only (console/report); it is excluded
    from serialized artifacts so that identical runs stay byte-identical.
    """

    omega_rmse_deg_s: dict[str, float]
    linear_speed_rmse_m_s: float
    period_relative_error_pct: dict[str, float]
    n_estimates: int
    n_truth: int
    runtime_seconds: float | None = field(default=None, compare=False)

    def as_dict(self) -> dict:
        return {
            "omega_rmse_deg_s": dict(self.omega_rmse_deg_s),
            "linear_speed_rmse_m_s": self.linear_speed_rmse_m_s,
            "period_relative_error_pct": dict(self.period_relative_error_pct),
            "samples": {"estimates": self.n_estimates, "truth": self.n_truth},
        }

    def json_text(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


def discrete_rates(truth_at_bounds: TruthSeries
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Interval-averaged truth: (omega, velocity) over each interval.

    Omega is the log of the attitude increment over dt, velocity the
    position displacement over dt. These are the same discrete quantities a
    pose-trajectory estimator measures, so a noiseless round trip compares
    to ~1e-13 instead of carrying the O(dt^2) midpoint placement bias.
    """
    dt = np.diff(truth_at_bounds.time)
    omega = np.empty((len(dt), 3))
    for i in range(len(dt)):
        a = Rotation(truth_at_bounds.quat[i])
        b = Rotation(truth_at_bounds.quat[i + 1])
        omega[i] = so3_log(a.inverse() @ b) / dt[i]
    velocity = np.diff(truth_at_bounds.position, axis=0) / dt[:, None]
    return omega, velocity


def evaluate_motion(est: MotionEstimate, truth_at_bounds: TruthSeries
                    ) -> EvalReport:
    """Per-axis omega RMSE, speed RMSE and period errors.

    truth_at_bounds must be sampled at the estimate's interval boundary
    times (est.interval_bounds()); see truth_from_config / TruthSeries.at.
    Truth is reduced to the same per-interval discrete rates the estimator
    measures; period errors are reported per axis whenever the sine fit
    succeeds on both series.
    """
    if len(truth_at_bounds) != len(est) + 1:
        raise ValueError("truth must be sampled at the estimate's interval "
                         "bounds (one more sample than intervals)")
    truth_omega, truth_velocity = discrete_rates(truth_at_bounds)
    omega_err = {}
    est_deg = np.degrees(est.omega)
    truth_deg = np.degrees(truth_omega)
    for i, axis in enumerate("xyz"):
        omega_err[axis] = rmse(est_deg[:, i], truth_deg[:, i])

    speed_rmse = rmse(est.speed, np.linalg.norm(truth_velocity, axis=1))

    period_err = {}
    for i, axis in enumerate("xyz"):
        est_fit = est.sine_fits.get(f"omega_{axis}")
        truth_fit = _try_fit(est.t_mid, truth_omega[:, i])
        if est_fit is not None and truth_fit is not None:
            period_err[axis] = period_relative_error(
                period_of(est_fit), period_of(truth_fit))

    return EvalReport(
        omega_rmse_deg_s=omega_err,
        linear_speed_rmse_m_s=speed_rmse,
        period_relative_error_pct=period_err,
        n_estimates=len(est),
        n_truth=len(truth_at_bounds),
    )


def _try_fit(times, values) -> SineFit | None:
    try:
        return fit_sine(times, values)
    except Exception:
        return None
