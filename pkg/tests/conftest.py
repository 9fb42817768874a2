import math

import numpy as np
import pytest

import sfmotion as sf

TUMBLE3D_INERTIA = (0.47, 0.47, 0.02)
TUMBLE3D_OMEGA0_DEG = (0.0, 0.1, 1.0)
TUMBLE3D_V0 = (0.0045, 0.0, 0.0)
TUMBLE3D_CAMERA = (30.0, 0.0, 0.0)

# body-frame transverse precession rate of the axisymmetric scenario
TUMBLE3D_PRECESSION_RATE = ((TUMBLE3D_INERTIA[2] - TUMBLE3D_INERTIA[0]) / TUMBLE3D_INERTIA[0]
                * math.radians(TUMBLE3D_OMEGA0_DEG[2]))
TUMBLE3D_PERIOD = 2.0 * math.pi / abs(TUMBLE3D_PRECESSION_RATE)  # ~376.0 s


def tumble3d_sim_config(duration=3000.0, sample_interval=10.0,
                     integrator_dt=0.1) -> sf.SimConfig:
    initial = sf.RigidBodyState(
        attitude=sf.Rotation.identity(),
        omega=np.radians(TUMBLE3D_OMEGA0_DEG),
        position=np.zeros(3),
        velocity=np.array(TUMBLE3D_V0),
        time=0.0)
    return sf.SimConfig(
        initial=initial,
        inertia=sf.InertiaModel(*TUMBLE3D_INERTIA),
        duration=duration,
        sample_interval=sample_interval,
        integrator_dt=integrator_dt,
        camera_position_inertial=np.array(TUMBLE3D_CAMERA))


@pytest.fixture(scope="session")
def tumble3d_config() -> sf.SimConfig:
    return tumble3d_sim_config()


@pytest.fixture(scope="session")
def tumble3d_states(tumble3d_config):
    return sf.simulate(tumble3d_config)


@pytest.fixture(scope="session")
def tumble3d_trajectory(tumble3d_states, tumble3d_config):
    return sf.to_camera_trajectory(tumble3d_states,
                                   tumble3d_config.camera_position_inertial)


def make_cube_cloud(per_face=2000, sigma=0.002, outlier_frac=0.0,
                    drop_face=None, seed=7):
    """Unit cube centered at the origin, sampled face by face.

    Returns (cloud, face_labels, n_face_points); outliers are appended after
    the labeled face points.
    """
    rng = np.random.default_rng(seed)
    faces = [(0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)]
    pts, labels = [], []
    for fi, (axis, sign) in enumerate(faces):
        if drop_face == fi:
            continue
        uv = rng.uniform(-0.5, 0.5, size=(per_face, 2))
        p = np.empty((per_face, 3))
        others = [k for k in range(3) if k != axis]
        p[:, axis] = 0.5 * sign + sign * rng.normal(0.0, sigma, per_face)
        p[:, others[0]] = uv[:, 0]
        p[:, others[1]] = uv[:, 1]
        pts.append(p)
        labels.extend([fi] * per_face)
    cloud_pts = np.vstack(pts)
    n_face = len(cloud_pts)
    if outlier_frac > 0.0:
        n_out = int(outlier_frac * n_face)
        cloud_pts = np.vstack([cloud_pts,
                               rng.uniform(-0.75, 0.75, (n_out, 3))])
    return sf.PointCloud(cloud_pts), np.array(labels), n_face
