"""Target motion from a relative camera-pose trajectory.

The camera center traced in the body-fixed frame is the moving radius
vector. Its norm change per interval gives the range rate, scaled into
meters by a user-supplied scale reference (SfM output has no absolute
scale); the relative rotation of consecutive camera poses, read in the body
frame, gives the incremental attitude change and hence the angular velocity.
Periodic angular-velocity components are summarized by a sine fit.

All angle outputs are rad or rad/s; conversion to degrees happens in the
report/CLI layer.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .cloud import TargetFrame
from .errors import AliasingError, NoPeriodicityError
from .geometry import Rotation, as_vec3, so3_log
from .model import PoseTrajectory

_ALIAS_MARGIN = 1e-6
_MIN_DISPLACEMENT = 1e-12


@dataclass(frozen=True)
class ScaleReference:
    """Meters per SfM unit, with a note on where the number came from."""

    scale_c: float
    provenance: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.scale_c) and self.scale_c > 0.0):
            raise ValueError(f"scale must be positive and finite, "
                             f"got {self.scale_c}")

    @classmethod
    def unit(cls) -> "ScaleReference":
        return cls(1.0, "unit scale (already metric)")


def scale_from_known_length(p_a, p_b, true_length_m: float) -> ScaleReference:
    """Scale from a feature of known physical length (e.g. a panel edge)."""
    if true_length_m <= 0.0:
        raise ValueError("true_length_m must be positive")
    d = float(np.linalg.norm(as_vec3(p_a) - as_vec3(p_b)))
    if d < _MIN_DISPLACEMENT:
        raise ValueError("reference points are coincident")
    return ScaleReference(true_length_m / d,
                          f"known length {true_length_m} m over "
                          f"{d:.6g} SfM units")


@dataclass(frozen=True)
class SineFit:
    """y ~= amplitude * sin(angular_frequency * t + phase) + offset."""

    amplitude: float
    angular_frequency: float
    phase: float
    offset: float
    rmse_residual: float

    def __post_init__(self):
        if self.amplitude < 0.0:
            raise ValueError("amplitude must be >= 0")
        if self.angular_frequency <= 0.0:
            raise ValueError("angular_frequency must be positive")
        if not (-math.pi < self.phase <= math.pi):
            raise ValueError("phase must lie in (-pi, pi]")

    def evaluate(self, times) -> np.ndarray:
        t = np.asarray(times, dtype=np.float64)
        return (self.amplitude * np.sin(self.angular_frequency * t + self.phase)
                + self.offset)


def period_of(fit: SineFit) -> float:
    return 2.0 * math.pi / fit.angular_frequency


@dataclass(frozen=True)
class MotionEstimate:
    """Per-interval motion parameters, vectors expressed in the body frame.

    Arrays are aligned: one entry per pose interval. velocity is the scaled
    radius-norm rate along the camera-displacement direction (see
    linear_motion); omega is the body-frame angular velocity.
    """

    t_mid: np.ndarray          # (M,) seconds, interval midpoints
    dt: np.ndarray             # (M,) seconds, interval lengths
    norm_change: np.ndarray    # (M,) SfM units (the per-interval L)
    radial_speed: np.ndarray   # (M,) m/s, signed range rate
    velocity: np.ndarray       # (M, 3) m/s
    phi: np.ndarray            # (M, 3) rad, incremental rotation vectors
    omega: np.ndarray          # (M, 3) rad/s
    frame: TargetFrame
    sine_fits: dict[str, SineFit | None]

    def __len__(self) -> int:
        return len(self.t_mid)

    @property
    def speed(self) -> np.ndarray:
        """(M,) unsigned linear speed in m/s."""
        return np.abs(self.radial_speed)

    def interval_bounds(self) -> np.ndarray:
        """(M+1,) the pose timestamps bounding the intervals."""
        return np.append(self.t_mid - 0.5 * self.dt,
                         self.t_mid[-1] + 0.5 * self.dt[-1])


# ---------------------------------------------------------------------------
# linear motion

def radius_vectors(traj: PoseTrajectory, origin) -> np.ndarray:
    """(N, 3) vectors from the body origin to each camera center."""
    if len(traj) < 1:
        raise ValueError("need at least one pose")
    return traj.centers - as_vec3(origin)[None, :]


def linear_motion(traj: PoseTrajectory, origin, scale: ScaleReference
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-interval (norm_change, radial_speed, velocity_vec).

    norm_change L = |r_{t+1}| - |r_t| in SfM units; radial_speed = c L / dt
    (signed; negative while the range closes); velocity_vec = radial_speed
    times the unit camera-displacement direction in the body frame, zero
    when the displacement is below 1e-12 SfM units.
    """
    if len(traj) < 2:
        raise ValueError("need at least two poses")
    r = radius_vectors(traj, origin)
    t = traj.timestamps
    dt = np.diff(t)
    if np.any(dt <= 0.0):
        raise ValueError("timestamps must be strictly increasing")
    norms = np.linalg.norm(r, axis=1)
    norm_change = np.diff(norms)
    radial_speed = scale.scale_c * norm_change / dt

    disp = np.diff(r, axis=0)
    disp_len = np.linalg.norm(disp, axis=1)
    e_d = np.zeros_like(disp)
    moving = disp_len > _MIN_DISPLACEMENT
    e_d[moving] = disp[moving] / disp_len[moving, None]
    velocity = radial_speed[:, None] * e_d
    velocity[~moving] = 0.0
    return norm_change, radial_speed, velocity


# ---------------------------------------------------------------------------
# rotation

def rotation_increments(traj: PoseTrajectory) -> list[Rotation]:
    """Per-interval body attitude change R_t^-1 R_{t+1} of the stored
    world-to-camera rotations; its inverse maps the camera orientation at t
    to the one at t+1 when both are read in the body frame."""
    if len(traj) < 2:
        raise ValueError("need at least two poses")
    return [a.rotation.inverse() @ b.rotation
            for a, b in zip(traj.poses, traj.poses[1:])]


def angular_velocity(increments, timestamps) -> np.ndarray:
    """(M, 3) body-frame angular velocity: log of each increment over dt.

    Raises AliasingError when a per-interval rotation reaches pi: beyond the
    log-map branch cut the rate is unrecoverable (sampling below the spin's
    Nyquist rate), and silently wrapping would corrupt the series.
    """
    increments = list(increments)
    t = np.asarray(timestamps, dtype=np.float64)
    if len(increments) != len(t) - 1:
        raise ValueError("need one increment per timestamp interval")
    out = np.empty((len(increments), 3))
    for i, (rot, dt) in enumerate(zip(increments, np.diff(t))):
        phi = so3_log(rot)
        angle = float(np.linalg.norm(phi))
        if angle >= math.pi - _ALIAS_MARGIN:
            raise AliasingError(
                f"per-interval rotation {angle:.6f} rad reaches the log branch "
                "cut; sample faster than half the spin period", interval=i)
        out[i] = phi / dt
    return out


# ---------------------------------------------------------------------------
# sine fitting

def fit_sine(times, values) -> SineFit:
    """Fit A sin(w t + phi) + b.

    Seeds the frequency from the discrete spectrum peak of the mean-removed
    series, solves the amplitude/phase/offset linearly at fixed frequency,
    then refines the frequency by golden-section search on the residual RMSE
    within one spectral bin of the seed.
    """
    t = np.asarray(times, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("times and values must be 1-D and the same length")
    if len(t) < 8:
        raise ValueError(f"need >= 8 samples, got {len(t)}")
    y0 = y - y.mean()
    if float(y0 @ y0) / len(y) < 1e-15:
        raise NoPeriodicityError("signal variance below 1e-15; nothing to fit")

    dt = float(np.median(np.diff(t)))
    spectrum = np.abs(np.fft.rfft(y0))
    freqs = np.fft.rfftfreq(len(y0), dt)
    k = 1 + int(np.argmax(spectrum[1:]))
    w_seed = 2.0 * math.pi * freqs[k]
    w_bin = 2.0 * math.pi * freqs[1]
    lo = max(w_seed - w_bin, 0.25 * w_bin)
    hi = w_seed + w_bin

    w_best = _golden_section(lambda w: _residual_rmse(t, y, w), lo, hi)
    a, b, offset, rmse = _solve_at_frequency(t, y, w_best)
    amplitude = math.hypot(a, b)
    phase = math.atan2(b, a)
    if phase <= -math.pi:
        phase = math.pi
    return SineFit(amplitude=amplitude, angular_frequency=w_best,
                   phase=phase, offset=offset, rmse_residual=rmse)


def _solve_at_frequency(t, y, w) -> tuple[float, float, float, float]:
    design = np.column_stack([np.sin(w * t), np.cos(w * t), np.ones_like(t)])
    sol, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ sol
    rmse = math.sqrt(float(resid @ resid) / len(y))
    return float(sol[0]), float(sol[1]), float(sol[2]), rmse


def _residual_rmse(t, y, w) -> float:
    return _solve_at_frequency(t, y, w)[3]


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_section(f, lo: float, hi: float, rel_tol: float = 1e-12,
                    max_iter: int = 200) -> float:
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= rel_tol * max(abs(a), abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


# ---------------------------------------------------------------------------
# end to end

def estimate_motion(traj: PoseTrajectory, frame: TargetFrame,
                    scale: ScaleReference) -> MotionEstimate:
    """Full per-interval motion estimate in the given body frame.

    Linear motion from the radius-vector norms around frame.origin, angular
    motion from the pose rotation increments; both re-expressed along the
    frame axes. Sine fits are attached per omega component when they
    succeed (aperiodic or flat components simply carry no fit).
    """
    if len(traj) < 2:
        raise ValueError("need at least two poses to estimate motion")
    norm_change, radial_speed, velocity_world = linear_motion(
        traj, frame.origin, scale)
    increments = rotation_increments(traj)
    t = traj.timestamps
    omega_world = angular_velocity(increments, t)
    phi_world = omega_world * np.diff(t)[:, None]

    velocity = frame.to_body(velocity_world)
    omega = frame.to_body(omega_world)
    phi = frame.to_body(phi_world)
    t_mid = 0.5 * (t[:-1] + t[1:])

    fits: dict[str, SineFit | None] = {}
    for i, name in enumerate(("omega_x", "omega_y", "omega_z")):
        try:
            fits[name] = fit_sine(t_mid, omega[:, i])
        except (NoPeriodicityError, ValueError):
            fits[name] = None

    return MotionEstimate(
        t_mid=t_mid, dt=np.diff(t), norm_change=norm_change,
        radial_speed=radial_speed, velocity=velocity, phi=phi, omega=omega,
        frame=frame, sine_fits=fits)


def omega_in_camera_axes(traj: PoseTrajectory, frame: TargetFrame,
                         omega_body: np.ndarray) -> np.ndarray:
    """Re-express body-frame angular velocities along the camera axes.

    Non-default output: reports stay in the body frame. Uses each interval's
    starting pose; for a stationary camera the camera axes are an inertial
    frame, so this is the inertially-expressed rate.
    """
    omega_body = np.asarray(omega_body, dtype=np.float64).reshape(-1, 3)
    if len(omega_body) != len(traj) - 1:
        raise ValueError("need one omega row per pose interval")
    m = frame.axes.matrix
    out = np.empty_like(omega_body)
    for i, p in enumerate(traj.poses[:-1]):
        out[i] = p.rotation.apply(m @ omega_body[i])
    return out


# ---------------------------------------------------------------------------
# serialization

MOTION_CSV_HEADER = ("t_mid_s,L,radial_speed_m_s,vx_m_s,vy_m_s,vz_m_s,"
                     "wx_deg_s,wy_deg_s,wz_deg_s")


def write_motion_csv(est: MotionEstimate, stream) -> None:
    stream.write(MOTION_CSV_HEADER + "\n")
    omega_deg = np.degrees(est.omega)
    for i in range(len(est)):
        row = [est.t_mid[i], est.norm_change[i], est.radial_speed[i],
               *est.velocity[i], *omega_deg[i]]
        stream.write(",".join(f"{v:.9g}" for v in row) + "\n")


def motion_csv_text(est: MotionEstimate) -> str:
    buf = io.StringIO()
    write_motion_csv(est, buf)
    return buf.getvalue()


def read_motion_csv(text: str) -> dict[str, np.ndarray]:
    """Read a motion CSV back into arrays (omegas converted to rad/s)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != MOTION_CSV_HEADER:
        raise ValueError(f"expected header '{MOTION_CSV_HEADER}'")
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if rows.size == 0:
        raise ValueError("motion CSV has no rows")
    return {
        "t_mid": rows[:, 0],
        "norm_change": rows[:, 1],
        "radial_speed": rows[:, 2],
        "velocity": rows[:, 3:6],
        "omega": np.radians(rows[:, 6:9]),
    }


def motion_summary(est: MotionEstimate) -> dict:
    """JSON-ready summary: means/stds plus sine-fit parameters per axis."""
    omega_deg = np.degrees(est.omega)
    summary = {
        "intervals": len(est),
        "mean_speed_m_s": float(np.mean(est.speed)),
        "mean_signed_radial_speed_m_s": float(np.mean(est.radial_speed)),
        "std_speed_m_s": float(np.std(est.speed)),
        "mean_velocity_m_s": [float(v) for v in est.velocity.mean(axis=0)],
        "mean_omega_deg_s": [float(v) for v in omega_deg.mean(axis=0)],
        "std_omega_deg_s": [float(v) for v in omega_deg.std(axis=0)],
        "sine_fits": {},
    }
    for name, fit in est.sine_fits.items():
        if fit is None:
            summary["sine_fits"][name] = None
        else:
            summary["sine_fits"][name] = {
                "amplitude_deg_s": math.degrees(fit.amplitude),
                "angular_frequency_rad_s": fit.angular_frequency,
                "phase_rad": fit.phase,
                "offset_deg_s": math.degrees(fit.offset),
                "rmse_residual_deg_s": math.degrees(fit.rmse_residual),
                "period_s": period_of(fit),
            }
    return summary


def motion_summary_text(est: MotionEstimate) -> str:
    return json.dumps(motion_summary(est), indent=2, sort_keys=True) + "\n"
