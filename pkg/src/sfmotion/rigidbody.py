"""Torque-free (or torqued) rigid-body simulator and its camera-view export.

Integrates N = I*domega/dt + omega x I*omega with classical RK4 on the pair
(attitude quaternion, body angular velocity), the quaternion renormalized
every step. Linear motion is force-free: constant velocity. The resulting
states can be converted into the pose trajectory an SfM run on a static
camera would produce, which closes the loop for end-to-end validation.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SimulationError
from .geometry import Pose, Rotation, Vec3, as_vec3, so3_exp
from .model import FRAME_METRIC, PoseTrajectory


@dataclass(frozen=True)
class InertiaModel:
    """Principal moments of inertia (kg m^2) and constant body torque (N m)."""

    ixx: float
    iyy: float
    izz: float
    torque: Vec3 = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "torque", as_vec3(self.torque))
        m = (self.ixx, self.iyy, self.izz)
        if any(v <= 0.0 for v in m):
            raise ValueError(f"principal moments must be positive, got {m}")
        if (self.ixx + self.iyy < self.izz or self.iyy + self.izz < self.ixx
                or self.izz + self.ixx < self.iyy):
            raise ValueError(f"moments violate the triangle inequality: {m}")

    @property
    def moments(self) -> Vec3:
        return np.array([self.ixx, self.iyy, self.izz])


@dataclass(frozen=True)
class RigidBodyState:
    """Body attitude (body->inertial), body-frame omega, inertial position/velocity."""

    attitude: Rotation
    omega: Vec3
    position: Vec3
    velocity: Vec3
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "omega", as_vec3(self.omega))
        object.__setattr__(self, "position", as_vec3(self.position))
        object.__setattr__(self, "velocity", as_vec3(self.velocity))
        if not math.isfinite(self.time):
            raise ValueError("time must be finite")

    @classmethod
    def at_rest(cls) -> "RigidBodyState":
        z = np.zeros(3)
        return cls(Rotation.identity(), z, z, z, 0.0)


@dataclass(frozen=True)
class SimConfig:
    initial: RigidBodyState
    inertia: InertiaModel
    duration: float
    sample_interval: float
    integrator_dt: float = 0.1
    camera_position_inertial: Vec3 = field(
        default_factory=lambda: np.array([10.0, 0.0, 0.0]))

    def __post_init__(self):
        object.__setattr__(self, "camera_position_inertial",
                           as_vec3(self.camera_position_inertial))
        if not (0.0 < self.integrator_dt <= self.sample_interval
                <= self.duration):
            raise ValueError(
                "need 0 < integrator_dt <= sample_interval <= duration, got "
                f"dt={self.integrator_dt}, interval={self.sample_interval}, "
                f"duration={self.duration}")


def euler_derivative(state: RigidBodyState, inertia: InertiaModel) -> Vec3:
    """Body-frame angular acceleration I^-1 (N - omega x I omega)."""
    return _omega_dot(state.omega, inertia.moments, inertia.torque)


def _omega_dot(w: np.ndarray, moments: np.ndarray, torque: np.ndarray
               ) -> np.ndarray:
    ix, iy, iz = moments
    wx, wy, wz = w
    return np.array([
        (torque[0] - (iz - iy) * wy * wz) / ix,
        (torque[1] - (ix - iz) * wz * wx) / iy,
        (torque[2] - (iy - ix) * wx * wy) / iz,
    ])


def _qdot(q: np.ndarray, w: np.ndarray) -> np.ndarray:
    """0.5 * q (x) (0, omega_body) for a body->inertial quaternion."""
    qw, qx, qy, qz = q
    wx, wy, wz = w
    return 0.5 * np.array([
        -qx * wx - qy * wy - qz * wz,
        qw * wx + qy * wz - qz * wy,
        qw * wy - qx * wz + qz * wx,
        qw * wz + qx * wy - qy * wx,
    ])


def _rk4_qw(q: np.ndarray, w: np.ndarray, moments: np.ndarray,
            torque: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    k1q = _qdot(q, w)
    k1w = _omega_dot(w, moments, torque)
    h = 0.5 * dt
    k2q = _qdot(q + h * k1q, w + h * k1w)
    k2w = _omega_dot(w + h * k1w, moments, torque)
    k3q = _qdot(q + h * k2q, w + h * k2w)
    k3w = _omega_dot(w + h * k2w, moments, torque)
    k4q = _qdot(q + dt * k3q, w + dt * k3w)
    k4w = _omega_dot(w + dt * k3w, moments, torque)
    s = dt / 6.0
    q_new = q + s * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
    q_new /= math.sqrt(float(q_new @ q_new))
    return q_new, w + s * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)


def rk4_step(state: RigidBodyState, inertia: InertiaModel, dt: float
             ) -> RigidBodyState:
    """Advance attitude/omega one RK4 step; position drifts at constant velocity."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    q, w = _rk4_qw(state.attitude.quat, state.omega, inertia.moments,
                   inertia.torque, dt)
    return RigidBodyState(
        attitude=Rotation(q),
        omega=w,
        position=state.position + state.velocity * dt,
        velocity=state.velocity,
        time=state.time + dt,
    )


def simulate(config: SimConfig) -> list[RigidBodyState]:
    """Integrate the scenario, sampling every sample_interval from t=0.

    Returns floor(duration / sample_interval) + 1 states including t=0.
    Substeps are sample_interval / ceil(sample_interval / integrator_dt), so
    samples land exactly on the requested times.
    """
    n_samples = int(math.floor(config.duration / config.sample_interval + 1e-9)) + 1
    n_sub = max(1, int(math.ceil(config.sample_interval / config.integrator_dt - 1e-9)))
    dt = config.sample_interval / n_sub
    moments = config.inertia.moments
    torque = config.inertia.torque

    states = [replace(config.initial, time=0.0)]
    q = config.initial.attitude.quat
    w = config.initial.omega.copy()
    p0 = config.initial.position
    v = config.initial.velocity
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n_samples):
            for _ in range(n_sub):
                q, w = _rk4_qw(q, w, moments, torque, dt)
            t = k * config.sample_interval
            if not (np.all(np.isfinite(q)) and np.all(np.isfinite(w))):
                raise SimulationError(
                    f"integration diverged at t={t:g} s (dt={dt:g}); reduce "
                    "integrator_dt or check inertia/torque")
            states.append(RigidBodyState(
                attitude=Rotation(q), omega=w.copy(),
                position=p0 + v * t, velocity=v, time=t))
    return states


def states_at(config: SimConfig, times) -> list[RigidBodyState]:
    """Integrate to arbitrary (sorted, >= 0) times; exact RK4 dense output.

    Used for evaluating ground truth at estimator timestamps, e.g. interval
    midpoints that never coincide with simulate() samples.
    """
    out = []
    q = config.initial.attitude.quat
    w = config.initial.omega.copy()
    p0 = config.initial.position
    v = config.initial.velocity
    t_cur = 0.0
    for t in times:
        t = float(t)
        if t < t_cur - 1e-12:
            raise ValueError("times must be sorted ascending")
        span = t - t_cur
        if span > 1e-12:
            n_sub = max(1, int(math.ceil(span / config.integrator_dt - 1e-9)))
            dt = span / n_sub
            for _ in range(n_sub):
                q, w = _rk4_qw(q, w, config.inertia.moments,
                               config.inertia.torque, dt)
        t_cur = t
        out.append(RigidBodyState(
            attitude=Rotation(q), omega=w.copy(),
            position=p0 + v * t, velocity=v, time=t))
    return out


def kinetic_energy(state: RigidBodyState, inertia: InertiaModel) -> float:
    w = state.omega
    return 0.5 * float(w @ (inertia.moments * w))


def momentum_magnitude(state: RigidBodyState, inertia: InertiaModel) -> float:
    return float(np.linalg.norm(inertia.moments * state.omega))


def to_camera_trajectory(states, camera_position) -> PoseTrajectory:
    """Express a static inertial camera in the body-fixed frame of each state.

    The emitted trajectory is what a noiseless SfM run (gauge-aligned with
    the body frame, metric scale) would output for a stationary camera
    observing the moving body: center = attitude^T (camera - position),
    world-to-camera rotation = attitude (camera axes taken parallel to the
    inertial axes).
    """
    cam = as_vec3(camera_position)
    states = list(states)
    if not states:
        raise ValueError("need at least one state")
    poses = [
        Pose(rotation=s.attitude,
             center=s.attitude.inverse().apply(cam - s.position),
             timestamp=s.time)
        for s in states
    ]
    return PoseTrajectory(tuple(poses), frame_tag=FRAME_METRIC,
                          source="rigid-body simulator")


def inject_pose_noise(traj: PoseTrajectory, sigma_rot_deg: float,
                      sigma_trans: float, seed: int) -> PoseTrajectory:
    """Perturb each pose by a random rotation and center offset.

    Rotation noise: axis uniform on the sphere, angle ~ N(0, sigma_rot);
    applied on the camera side. Center noise: isotropic N(0, sigma_trans I).
    Deterministic for a given seed.
    """
    if sigma_rot_deg < 0.0 or sigma_trans < 0.0:
        raise ValueError("noise sigmas must be >= 0")
    rng = np.random.default_rng(seed)
    sigma_rot = math.radians(sigma_rot_deg)
    poses = []
    for p in traj.poses:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.normal(0.0, sigma_rot)
        offset = rng.normal(0.0, sigma_trans, size=3)
        rotation = so3_exp(axis * angle) @ p.rotation if angle != 0.0 \
            else p.rotation
        poses.append(Pose(rotation=rotation, center=p.center + offset,
                          timestamp=p.timestamp))
    return PoseTrajectory(tuple(poses), frame_tag=traj.frame_tag,
                          source=traj.source)


TRUTH_CSV_HEADER = ("time_s,qw,qx,qy,qz,wx_rad_s,wy_rad_s,wz_rad_s,"
                    "px_m,py_m,pz_m,vx_m_s,vy_m_s,vz_m_s")


def write_truth_csv(states, stream) -> None:
    """Ground-truth CSV: time, attitude quaternion, omega, position, velocity."""
    stream.write(TRUTH_CSV_HEADER + "\n")
    for s in states:
        qw, qx, qy, qz = s.attitude.quat
        row = [s.time, qw, qx, qy, qz, *s.omega, *s.position, *s.velocity]
        stream.write(",".join(f"{v:.9g}" for v in row) + "\n")


def truth_csv_text(states) -> str:
    buf = io.StringIO()
    write_truth_csv(states, buf)
    return buf.getvalue()
