"""Point-cloud conditioning, plane detection and body-frame definition.

The sparse reconstruction is denoised (radius outlier removal), homogenized
(voxel downsampling), optionally completed back to a full primitive shape
when one side is missing, and summarized into a body-fixed frame: origin at
the centroid, axes from RANSAC plane normals.

Neighbor queries for the two conditioning operations use a uniform grid with
radius-sized cells and a 27-cell probe so they stay trivially comparable to
the brute-force oracles in the tests. Parameter defaults are scale-free,
derived from the median nearest-neighbor distance, because SfM clouds carry
an arbitrary gauge scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError, EmptyInputError
from .geometry import Rotation, Vec3, as_vec3
from .model import PointCloud

MIN_NORMAL_SEPARATION_DEG = 10.0


@dataclass(frozen=True)
class Plane:
    """Plane n . p + d = 0 with unit normal, oriented so d <= 0."""

    normal: Vec3
    offset: float
    inlier_indices: np.ndarray

    def __post_init__(self):
        n = as_vec3(self.normal)
        object.__setattr__(self, "normal", n)
        if abs(float(np.linalg.norm(n)) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        object.__setattr__(self, "inlier_indices",
                           np.asarray(self.inlier_indices, dtype=np.int64))

    def distances(self, points: np.ndarray) -> np.ndarray:
        return np.abs(points @ self.normal + self.offset)

    def as_dict(self) -> dict:
        return {
            "normal": [float(v) for v in self.normal],
            "offset": float(self.offset),
            "inlier_count": int(len(self.inlier_indices)),
        }


@dataclass(frozen=True)
class TargetFrame:
    """Body-fixed frame: origin at the cloud centroid, axes from plane normals.

    axes.matrix columns are the x/y/z body axes expressed in SfM-world
    coordinates; a vector v_world has body components axes.matrix.T @ v_world.
    """

    origin: Vec3
    axes: Rotation

    def __post_init__(self):
        object.__setattr__(self, "origin", as_vec3(self.origin))

    @classmethod
    def identity(cls) -> "TargetFrame":
        return cls(np.zeros(3), Rotation.identity())

    def to_body(self, v_world: np.ndarray) -> np.ndarray:
        return np.asarray(v_world) @ self.axes.matrix  # == (M^T v) rowwise

    def as_dict(self) -> dict:
        return {
            "origin": [float(v) for v in self.origin],
            "axes_columns_xyz": [[float(v) for v in col]
                                 for col in self.axes.matrix.T],
        }


# ---------------------------------------------------------------------------
# neighbor grid

class _UniformGrid:
    """Points bucketed into cubic cells; probe a point's 27 surrounding cells."""

    def __init__(self, points: np.ndarray, cell: float):
        self.points = points
        self.cell = cell
        self.origin = points.min(axis=0) if len(points) else np.zeros(3)
        keys = np.floor((points - self.origin) / cell).astype(np.int64)
        self.buckets: dict[tuple[int, int, int], list[int]] = {}
        for idx, key in enumerate(map(tuple, keys)):
            self.buckets.setdefault(key, []).append(idx)
        self.keys = keys

    def neighbors_within(self, idx: int, radius: float) -> int:
        """Count other points within `radius` of point idx."""
        kx, ky, kz = self.keys[idx]
        candidates: list[int] = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    bucket = self.buckets.get((kx + dx, ky + dy, kz + dz))
                    if bucket:
                        candidates.extend(bucket)
        cand = np.array(candidates, dtype=np.int64)
        d2 = np.sum((self.points[cand] - self.points[idx]) ** 2, axis=1)
        within = int(np.count_nonzero(d2 <= radius * radius))
        return within - 1  # exclude the point itself


def radius_outlier_removal(cloud: PointCloud, radius: float,
                           min_neighbors: int) -> PointCloud:
    """Keep points having >= min_neighbors others within `radius`."""
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if min_neighbors < 1:
        raise ValueError("min_neighbors must be >= 1")
    if len(cloud) == 0:
        return cloud
    grid = _UniformGrid(cloud.points, radius)
    keep = np.array([grid.neighbors_within(i, radius) >= min_neighbors
                     for i in range(len(cloud))])
    return cloud.select(keep)


def voxel_downsample(cloud: PointCloud, voxel_size: float,
                     origin: Vec3 | None = None) -> PointCloud:
    """Replace the points of each occupied voxel by their mean position.

    The grid is anchored at the cloud's minimum corner unless an explicit
    origin is given (needed for idempotency checks). Colors are averaged;
    track lengths do not survive merging. Output keeps first-occurrence
    order, one point per voxel.
    """
    if voxel_size <= 0.0:
        raise ValueError("voxel_size must be positive")
    if len(cloud) == 0:
        return cloud
    anchor = cloud.points.min(axis=0) if origin is None else as_vec3(origin)
    keys = np.floor((cloud.points - anchor) / voxel_size).astype(np.int64)
    _, first_pos, inverse = np.unique(keys, axis=0, return_index=True,
                                      return_inverse=True)
    order = np.argsort(first_pos, kind="stable")  # first-occurrence order
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    group = rank[inverse]  # voxel id per point, in first-occurrence order

    n_vox = len(first_pos)
    counts = np.bincount(group, minlength=n_vox).astype(np.float64)
    means = np.stack([
        np.bincount(group, weights=cloud.points[:, k], minlength=n_vox)
        for k in range(3)
    ], axis=1) / counts[:, None]

    colors = None
    if cloud.colors is not None:
        colors = np.stack([
            np.bincount(group, weights=cloud.colors[:, k].astype(np.float64),
                        minlength=n_vox)
            for k in range(3)
        ], axis=1) / counts[:, None]
        colors = np.clip(np.rint(colors), 0, 255).astype(np.uint8)
    return PointCloud(means, colors)


def centroid(cloud: PointCloud) -> Vec3:
    """Arithmetic mean of all points."""
    if len(cloud) == 0:
        raise EmptyInputError("cannot take the centroid of an empty cloud")
    return cloud.points.mean(axis=0)


def median_nn_distance(cloud: PointCloud) -> float:
    """Median nearest-neighbor distance; the scale unit for all defaults."""
    if len(cloud) < 2:
        raise EmptyInputError("need >= 2 points for a neighbor distance")
    tree = cKDTree(cloud.points)
    d, _ = tree.query(cloud.points, k=2)
    return float(np.median(d[:, 1]))


# ---------------------------------------------------------------------------
# RANSAC planes

def _plane_sign(normal: np.ndarray, d: float) -> tuple[np.ndarray, float]:
    """Orient so d <= 0; break d == 0 ties by the first nonzero component."""
    if d > 0.0 or (d == 0.0 and _first_nonzero(normal) < 0.0):
        return -normal, -d
    return normal, d


def _first_nonzero(v: np.ndarray) -> float:
    for x in v:
        if x != 0.0:
            return float(x)
    return 0.0


def ransac_plane(cloud: PointCloud, threshold: float,
                 max_iterations: int = 1000, seed: int = 0) -> Plane:
    """Best plane by inlier count over random 3-point samples, PCA-refit.

    Deterministic for a given seed. The consensus plane is refit to its
    inliers (smallest eigenvector of the inlier covariance) and the inlier
    set recomputed against the refit plane.
    """
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    pts = cloud.points
    n = len(pts)
    if n < 3:
        raise DegenerateGeometryError(f"need >= 3 points, got {n}")
    rng = np.random.default_rng(seed)

    best_count = 0
    best: tuple[np.ndarray, float] | None = None
    for _ in range(max_iterations):
        ia, ib, ic = rng.choice(n, size=3, replace=False)
        a, b, c = pts[ia], pts[ib], pts[ic]
        normal = np.cross(b - a, c - a)
        norm = float(np.linalg.norm(normal))
        scale = float(np.linalg.norm(b - a)) * float(np.linalg.norm(c - a))
        if norm <= 1e-12 * max(scale, 1e-300):
            continue  # collinear sample
        normal = normal / norm
        d = -float(normal @ a)
        count = int(np.count_nonzero(np.abs(pts @ normal + d) <= threshold))
        if count > best_count:
            best_count = count
            best = (normal, d)

    if best is None:
        raise DegenerateGeometryError(
            "all RANSAC samples were collinear; no plane found")

    normal, d = best
    inliers = np.flatnonzero(np.abs(pts @ normal + d) <= threshold)
    if len(inliers) >= 3:
        sub = pts[inliers]
        center = sub.mean(axis=0)
        cov = (sub - center).T @ (sub - center)
        _, vecs = np.linalg.eigh(cov)
        refit_n = vecs[:, 0]
        refit_n = refit_n / np.linalg.norm(refit_n)
        refit_d = -float(refit_n @ center)
        inliers = np.flatnonzero(np.abs(pts @ refit_n + refit_d) <= threshold)
        normal, d = refit_n, refit_d
    normal, d = _plane_sign(normal, d)
    return Plane(normal=normal, offset=d, inlier_indices=inliers)


def detect_planes(cloud: PointCloud, max_planes: int, threshold: float,
                  min_inlier_fraction: float = 0.15, max_iterations: int = 1000,
                  seed: int = 0) -> list[Plane]:
    """Sequential RANSAC: detect, peel inliers, repeat.

    Stops at max_planes, when the best plane's inlier share of the remaining
    points drops below min_inlier_fraction, or when too few points remain.
    Inlier indices refer to the original cloud.
    """
    remaining = np.arange(len(cloud), dtype=np.int64)
    planes: list[Plane] = []
    for round_idx in range(max_planes):
        if len(remaining) < 3:
            break
        sub = cloud.select(remaining)
        try:
            plane = ransac_plane(sub, threshold, max_iterations,
                                 seed=seed + round_idx)
        except DegenerateGeometryError:
            break
        if len(plane.inlier_indices) < min_inlier_fraction * len(remaining):
            break
        global_inliers = remaining[plane.inlier_indices]
        planes.append(Plane(plane.normal, plane.offset, global_inliers))
        mask = np.ones(len(remaining), dtype=bool)
        mask[plane.inlier_indices] = False
        remaining = remaining[mask]
    return planes


# ---------------------------------------------------------------------------
# body frame

def define_target_frame(planes, origin) -> TargetFrame:
    """Frame from plane normals: x along the largest plane's normal, z from
    the next plane whose normal is usefully separated (>= 10 deg as a line
    direction), Gram-Schmidt orthogonalized; y completes the right-handed set.
    """
    planes = sorted(planes, key=lambda p: len(p.inlier_indices), reverse=True)
    if len(planes) < 2:
        raise DegenerateGeometryError(
            f"need >= 2 planes to fix a frame, got {len(planes)}")
    x_axis = planes[0].normal
    min_sin = math.sin(math.radians(MIN_NORMAL_SEPARATION_DEG))
    for other in planes[1:]:
        z_raw = other.normal - (other.normal @ x_axis) * x_axis
        norm = float(np.linalg.norm(z_raw))
        if norm >= min_sin:
            z_axis = z_raw / norm
            y_axis = np.cross(z_axis, x_axis)
            m = np.column_stack([x_axis, y_axis, z_axis])
            return TargetFrame(origin=as_vec3(origin),
                               axes=Rotation.from_matrix(m))
    raise DegenerateGeometryError(
        "plane normals are within 10 deg of parallel; frame is degenerate")


# ---------------------------------------------------------------------------
# damaged-shape completion

def complete_shape(cloud: PointCloud, primitive: str, planes) -> PointCloud:
    """Fill missing faces of a primitive so the centroid lands mid-body again.

    Fits the primitive to the detected planes (cube: box in the frame
    spanned by the plane normals; cylinder: axis from the largest plane,
    radius by least-squares circle), then synthesizes surface points where
    the data has none, at a grid spacing matched to the observed density
    (2x median nearest-neighbor distance). Output = input + synthesized.
    """
    planes = list(planes)
    if primitive == "cube":
        if len(planes) < 3:
            raise DegenerateGeometryError(
                f"cube completion requires >= 3 planes, got {len(planes)}")
        basis = _cube_basis(planes)
    elif primitive == "cylinder":
        if len(planes) < 1:
            raise DegenerateGeometryError(
                "cylinder completion requires >= 1 plane for the axis")
        basis = None
    else:
        raise ValueError(f"unknown primitive {primitive!r}")
    if len(cloud) < 2:
        raise EmptyInputError("cannot complete a cloud with < 2 points")

    spacing = 2.0 * median_nn_distance(cloud)
    reject_radius = 1.5 * spacing
    if primitive == "cube":
        candidates = _cube_face_candidates(cloud.points, basis, spacing)
    else:
        candidates = _cylinder_candidates(cloud.points, planes, spacing)
    if len(candidates) == 0:
        return cloud

    tree = cKDTree(cloud.points)
    dist, _ = tree.query(candidates, k=1)
    synth = candidates[dist > reject_radius]
    if len(synth) == 0:
        return cloud

    points = np.vstack([cloud.points, synth])
    colors = None
    if cloud.colors is not None:
        fill = np.rint(cloud.colors.mean(axis=0)).astype(np.uint8)
        colors = np.vstack([cloud.colors,
                            np.tile(fill, (len(synth), 1))])
    return PointCloud(points, colors)


def _cube_basis(planes) -> np.ndarray:
    """Orthonormal box axes from the two best-separated large plane normals."""
    ordered = sorted(planes, key=lambda p: len(p.inlier_indices), reverse=True)
    u1 = ordered[0].normal
    min_sin = math.sin(math.radians(MIN_NORMAL_SEPARATION_DEG))
    for other in ordered[1:]:
        raw = other.normal - (other.normal @ u1) * u1
        norm = float(np.linalg.norm(raw))
        if norm >= min_sin:
            u2 = raw / norm
            return np.column_stack([u1, u2, np.cross(u1, u2)])
    raise DegenerateGeometryError(
        "cube completion needs two non-parallel plane normals")


def _face_grid(lo: np.ndarray, hi: np.ndarray, axis: int, value: float,
               spacing: float) -> np.ndarray:
    """Grid of candidates on one box face, inset half a spacing from edges."""
    axes = [k for k in range(3) if k != axis]
    coords = []
    for k in axes:
        n = max(1, int(math.floor((hi[k] - lo[k]) / spacing)))
        coords.append(lo[k] + (hi[k] - lo[k]) / 2.0
                      + (np.arange(n) - (n - 1) / 2.0) * spacing)
    g0, g1 = np.meshgrid(coords[0], coords[1], indexing="ij")
    out = np.empty((g0.size, 3))
    out[:, axis] = value
    out[:, axes[0]] = g0.ravel()
    out[:, axes[1]] = g1.ravel()
    return out


def _cube_face_candidates(points: np.ndarray, basis: np.ndarray,
                          spacing: float) -> np.ndarray:
    local = points @ basis  # coordinates in the box frame
    lo = local.min(axis=0)
    hi = local.max(axis=0)
    faces = []
    for axis in range(3):
        for value in (lo[axis], hi[axis]):
            faces.append(_face_grid(lo, hi, axis, value, spacing))
    return np.vstack(faces) @ basis.T


def _cylinder_candidates(points: np.ndarray, planes, spacing: float
                         ) -> np.ndarray:
    """Lateral + cap candidates for a cylinder whose axis is the largest
    plane's normal (the end caps are what plane detection finds)."""
    axis = max(planes, key=lambda p: len(p.inlier_indices)).normal
    # in-plane orthobasis
    seed = np.array([1.0, 0.0, 0.0])
    if abs(seed @ axis) > 0.9:
        seed = np.array([0.0, 1.0, 0.0])
    e1 = seed - (seed @ axis) * axis
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)

    h = points @ axis
    uv = np.column_stack([points @ e1, points @ e2])
    cx, cy, radius = _fit_circle(uv)
    h_lo, h_hi = float(h.min()), float(h.max())

    n_theta = max(8, int(round(2.0 * math.pi * radius / spacing)))
    thetas = np.arange(n_theta) * (2.0 * math.pi / n_theta)
    n_h = max(1, int(math.floor((h_hi - h_lo) / spacing)))
    hs = h_lo + (h_hi - h_lo) / 2.0 + (np.arange(n_h) - (n_h - 1) / 2.0) * spacing

    rings = []
    circle = np.column_stack([cx + radius * np.cos(thetas),
                              cy + radius * np.sin(thetas)])
    for hv in hs:
        rings.append(np.column_stack([circle,
                                      np.full(n_theta, hv)]))
    # cap disks: concentric rings down to the center
    for hv in (h_lo, h_hi):
        r = radius - spacing
        while r > 0.5 * spacing:
            n_t = max(6, int(round(2.0 * math.pi * r / spacing)))
            th = np.arange(n_t) * (2.0 * math.pi / n_t)
            rings.append(np.column_stack([cx + r * np.cos(th),
                                          cy + r * np.sin(th),
                                          np.full(n_t, hv)]))
            r -= spacing
        rings.append(np.array([[cx, cy, hv]]))
    uvh = np.vstack(rings)
    return (uvh[:, 0:1] * e1 + uvh[:, 1:2] * e2 + uvh[:, 2:3] * axis)


def _fit_circle(uv: np.ndarray) -> tuple[float, float, float]:
    """Least-squares (Kasa) circle fit in 2D."""
    a = np.column_stack([2.0 * uv, np.ones(len(uv))])
    b = np.sum(uv ** 2, axis=1)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    cx, cy, k = sol
    r2 = k + cx * cx + cy * cy
    if r2 <= 0.0:
        raise DegenerateGeometryError("circle fit collapsed (radius^2 <= 0)")
    return float(cx), float(cy), math.sqrt(float(r2))
