import math

import numpy as np
import pytest

import sfmotion as sf
from sfmotion.cloud import (Plane, TargetFrame, centroid, complete_shape,
                            define_target_frame, detect_planes,
                            median_nn_distance, radius_outlier_removal,
                            ransac_plane, voxel_downsample)
from sfmotion.errors import DegenerateGeometryError, EmptyInputError

from conftest import make_cube_cloud


def brute_force_ror(points, radius, min_neighbors):
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=-1)
    counts = np.count_nonzero(d2 <= radius * radius, axis=1) - 1
    return counts >= min_neighbors


def brute_force_voxel(points, size):
    anchor = points.min(axis=0)
    keys = np.floor((points - anchor) / size).astype(np.int64)
    order: dict[tuple, list[int]] = {}
    for i, key in enumerate(map(tuple, keys)):
        order.setdefault(key, []).append(i)
    means = []
    for key, idx in order.items():  # dict preserves first-occurrence order
        acc = np.zeros(3)
        for i in idx:
            acc = acc + points[i]
        means.append(acc / len(idx))
    return np.array(means)


class TestRadiusOutlierRemoval:
    def test_single_isolated_point_dropped(self):
        out = radius_outlier_removal(sf.PointCloud([[0.0, 0.0, 0.0]]),
                                     radius=1.0, min_neighbors=1)
        assert len(out) == 0

    def test_grid_kept_far_outlier_dropped(self):
        g = np.stack(np.meshgrid(*[np.arange(4.0)] * 3),
                     axis=-1).reshape(-1, 3)
        pts = np.vstack([g, [[100.0, 100.0, 100.0]]])
        out = radius_outlier_removal(sf.PointCloud(pts), radius=1.1,
                                     min_neighbors=3)
        assert len(out) == len(g)
        assert not np.any(np.all(out.points == [100.0, 100.0, 100.0], axis=1))

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0, 1, (1000, 3))
        radius = rng.uniform(0.02, 0.2)
        k = int(rng.integers(1, 8))
        out = radius_outlier_removal(sf.PointCloud(pts), radius, k)
        expected = pts[brute_force_ror(pts, radius, k)]
        assert np.array_equal(out.points, expected)

    def test_order_preserved_and_metadata_carried(self):
        pts = [[0, 0, 0], [0.1, 0, 0], [5, 5, 5], [0.2, 0, 0]]
        cloud = sf.PointCloud(pts, colors=[[1, 1, 1], [2, 2, 2],
                                           [3, 3, 3], [4, 4, 4]])
        out = radius_outlier_removal(cloud, 0.5, 1)
        assert out.colors.tolist() == [[1, 1, 1], [2, 2, 2], [4, 4, 4]]

    def test_empty_cloud_passthrough(self):
        assert len(radius_outlier_removal(sf.PointCloud.empty(), 1.0, 1)) == 0


class TestVoxelDownsample:
    def test_two_points_one_voxel_midpoint(self):
        out = voxel_downsample(sf.PointCloud([[0.1, 0.1, 0.1],
                                              [0.3, 0.1, 0.1]]), 1.0)
        assert np.allclose(out.points, [[0.2, 0.1, 0.1]])

    def test_distinct_voxels_unchanged(self):
        pts = np.array([[0.5, 0.5, 0.5], [1.5, 0.5, 0.5], [0.5, 1.5, 0.5]])
        out = voxel_downsample(sf.PointCloud(pts), 1.0)
        assert np.array_equal(out.points, pts)

    @pytest.mark.parametrize("seed", [3, 4, 5])
    def test_matches_bucket_oracle(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-1, 1, (1000, 3))
        size = rng.uniform(0.05, 0.5)
        out = voxel_downsample(sf.PointCloud(pts), size)
        assert np.array_equal(out.points, brute_force_voxel(pts, size))

    def test_idempotent_at_fixed_anchor(self):
        rng = np.random.default_rng(9)
        pts = rng.uniform(0, 1, (500, 3))
        anchor = np.zeros(3)
        once = voxel_downsample(sf.PointCloud(pts), 0.2, origin=anchor)
        twice = voxel_downsample(once, 0.2, origin=anchor)
        assert np.abs(once.points - twice.points).max() < 1e-12

    def test_colors_averaged(self):
        cloud = sf.PointCloud([[0.1, 0, 0], [0.2, 0, 0]],
                              colors=[[0, 0, 0], [255, 255, 255]])
        out = voxel_downsample(cloud, 1.0)
        assert out.colors.tolist() == [[128, 128, 128]]


class TestCentroid:
    def test_uniform_grid_center(self):
        g = np.stack(np.meshgrid(*[np.linspace(0, 1, 5)] * 3),
                     axis=-1).reshape(-1, 3)
        assert np.allclose(centroid(sf.PointCloud(g)), [0.5, 0.5, 0.5])

    def test_single_point(self):
        assert np.allclose(centroid(sf.PointCloud([[1.0, -2.0, 3.0]])),
                           [1.0, -2.0, 3.0])

    def test_hand_computed_mean(self):
        pts = [[1, 0, 0], [3, 2, 0], [5, 4, 6], [-1, 2, 2], [2, 2, 2]]
        assert np.allclose(centroid(sf.PointCloud(pts)), [2.0, 2.0, 2.0])

    def test_empty_is_error(self):
        with pytest.raises(EmptyInputError):
            centroid(sf.PointCloud.empty())


class TestRansacPlane:
    def test_exact_plane_z_equals_1(self):
        rng = np.random.default_rng(0)
        pts = np.column_stack([rng.uniform(-1, 1, (200, 2)), np.ones(200)])
        plane = ransac_plane(sf.PointCloud(pts), threshold=1e-6, seed=1)
        assert np.allclose(plane.normal, [0, 0, 1], atol=1e-9)
        assert abs(plane.offset + 1.0) < 1e-9  # d = -1, sign convention d <= 0
        assert len(plane.inlier_indices) == 200

    def test_noisy_plane_within_half_degree(self):
        rng = np.random.default_rng(1)
        n_true = np.array([1.0, 2.0, -0.5])
        n_true /= np.linalg.norm(n_true)
        basis = np.linalg.svd(n_true[None, :])[2][1:]
        good = rng.uniform(-1, 1, (950, 2)) @ basis + 0.3 * n_true
        bad = rng.uniform(-2, 2, (50, 3))
        plane = ransac_plane(sf.PointCloud(np.vstack([good, bad])),
                             threshold=0.02, seed=2)
        cosang = abs(float(plane.normal @ n_true))
        assert math.degrees(math.acos(min(cosang, 1.0))) < 0.5

    def test_three_points_exact(self):
        pts = [[0, 0, 0], [1, 0, 0], [0, 1, 0]]
        plane = ransac_plane(sf.PointCloud(pts), threshold=1e-9, seed=0)
        assert np.allclose(np.abs(plane.normal), [0, 0, 1], atol=1e-12)
        assert len(plane.inlier_indices) == 3

    def test_collinear_points_no_plane(self):
        pts = np.column_stack([np.linspace(0, 1, 50), np.zeros(50),
                               np.zeros(50)])
        with pytest.raises(DegenerateGeometryError):
            ransac_plane(sf.PointCloud(pts), threshold=1e-6, seed=0)

    def test_deterministic_per_seed(self):
        cloud, _, _ = make_cube_cloud(per_face=200)
        a = ransac_plane(cloud, threshold=0.01, seed=8)
        b = ransac_plane(cloud, threshold=0.01, seed=8)
        assert np.array_equal(a.normal, b.normal)
        assert a.offset == b.offset
        assert np.array_equal(a.inlier_indices, b.inlier_indices)

    def test_inliers_satisfy_threshold(self):
        cloud, _, _ = make_cube_cloud(per_face=300, outlier_frac=0.1)
        plane = ransac_plane(cloud, threshold=0.01, seed=3)
        assert np.all(plane.distances(cloud.points[plane.inlier_indices])
                      <= 0.01)


class TestDetectPlanes:
    def test_cube_gives_six_orthogonal_planes(self):
        cloud, _, _ = make_cube_cloud(per_face=600)
        planes = detect_planes(cloud, max_planes=6, threshold=0.01, seed=5)
        assert len(planes) == 6
        for i in range(6):
            for j in range(i + 1, 6):
                c = abs(float(planes[i].normal @ planes[j].normal))
                ang = math.degrees(math.acos(min(c, 1.0)))
                assert min(ang, abs(90.0 - ang)) < 1.0

    def test_single_plane_cloud(self):
        rng = np.random.default_rng(2)
        pts = np.column_stack([rng.uniform(-1, 1, (300, 2)),
                               np.zeros(300)])
        planes = detect_planes(sf.PointCloud(pts), max_planes=4,
                               threshold=0.01, seed=0)
        assert len(planes) == 1

    def test_pure_noise_yields_nothing(self):
        rng = np.random.default_rng(3)
        cloud = sf.PointCloud(rng.uniform(-1, 1, (2000, 3)))
        planes = detect_planes(cloud, max_planes=4, threshold=0.01,
                               min_inlier_fraction=0.3, seed=0)
        assert planes == []

    def test_inlier_indices_refer_to_original_cloud(self):
        cloud, labels, n_face = make_cube_cloud(per_face=400)
        planes = detect_planes(cloud, max_planes=6, threshold=0.01, seed=5)
        for plane in planes:
            members = plane.inlier_indices
            face_of = labels[members[members < n_face]]
            values, counts = np.unique(face_of, return_counts=True)
            assert counts.max() / counts.sum() > 0.95  # one face dominates


class TestTargetFrame:
    def test_axis_permutation(self):
        planes = [
            Plane([1, 0, 0], 0.0, np.arange(100)),
            Plane([0, 0, 1], 0.0, np.arange(50)),
        ]
        frame = define_target_frame(planes, origin=(0, 0, 0))
        m = frame.axes.matrix
        assert np.allclose(m[:, 0], [1, 0, 0], atol=1e-12)
        assert np.allclose(m[:, 2], [0, 0, 1], atol=1e-12)
        assert np.allclose(m[:, 1], [0, 1, 0], atol=1e-12)

    def test_gram_schmidt_absorbs_perturbation(self):
        eps = 1e-3
        n2 = np.array([eps, 0.0, 1.0])
        n2 /= np.linalg.norm(n2)
        planes = [Plane([1, 0, 0], 0.0, np.arange(10)),
                  Plane(n2, 0.0, np.arange(5))]
        frame = define_target_frame(planes, origin=(1, 2, 3))
        m = frame.axes.matrix
        assert np.abs(m.T @ m - np.eye(3)).max() < 1e-12
        assert abs(np.linalg.det(m) - 1.0) < 1e-12

    def test_five_degrees_apart_is_degenerate(self):
        angle = math.radians(5.0)
        n2 = np.array([math.sin(angle), 0.0, math.cos(angle)])
        planes = [Plane([0, 0, 1], 0.0, np.arange(10)),
                  Plane(n2, 0.0, np.arange(5))]
        with pytest.raises(DegenerateGeometryError):
            define_target_frame(planes, origin=(0, 0, 0))

    def test_largest_plane_defines_x(self):
        planes = [Plane([0, 0, 1], 0.0, np.arange(5)),
                  Plane([1, 0, 0], 0.0, np.arange(500))]
        frame = define_target_frame(planes, origin=(0, 0, 0))
        assert np.allclose(frame.axes.matrix[:, 0], [1, 0, 0], atol=1e-12)

    def test_skips_antiparallel_second_plane(self):
        planes = [Plane([1, 0, 0], 0.0, np.arange(100)),
                  Plane([-1, 0, 0], -0.5, np.arange(80)),
                  Plane([0, 1, 0], 0.0, np.arange(60))]
        frame = define_target_frame(planes, origin=(0, 0, 0))
        assert np.allclose(frame.axes.matrix[:, 2], [0, 1, 0], atol=1e-12)


class TestCompleteShape:
    def test_damaged_cube_centroid_recovered(self):
        damaged, _, _ = make_cube_cloud(per_face=1500, drop_face=0, seed=11)
        before = np.linalg.norm(centroid(damaged))  # true center is 0
        planes = detect_planes(damaged, max_planes=6,
                               threshold=median_nn_distance(damaged), seed=1)
        completed = complete_shape(damaged, "cube", planes)
        after = np.linalg.norm(centroid(completed))
        assert before >= 0.05
        assert after <= 0.02

    def test_undamaged_cube_barely_grows(self):
        full, _, _ = make_cube_cloud(per_face=1500, seed=12)
        planes = detect_planes(full, max_planes=6,
                               threshold=median_nn_distance(full), seed=1)
        completed = complete_shape(full, "cube", planes)
        assert (len(completed) - len(full)) / len(full) <= 0.01

    def test_empty_plane_list_is_error(self):
        cloud, _, _ = make_cube_cloud(per_face=100)
        with pytest.raises(DegenerateGeometryError):
            complete_shape(cloud, "cube", [])

    def test_unknown_primitive(self):
        cloud, _, _ = make_cube_cloud(per_face=100)
        with pytest.raises(ValueError):
            complete_shape(cloud, "sphere", [])

    def test_cylinder_cap_fill(self):
        rng = np.random.default_rng(4)
        n = 3000
        theta = rng.uniform(0, 2 * math.pi, n)
        z = rng.uniform(0, 1, n)
        lateral = np.column_stack([0.5 * np.cos(theta),
                                   0.5 * np.sin(theta), z])
        disk_r = 0.5 * np.sqrt(rng.uniform(0, 1, 800))
        disk_t = rng.uniform(0, 2 * math.pi, 800)
        bottom = np.column_stack([disk_r * np.cos(disk_t),
                                  disk_r * np.sin(disk_t), np.zeros(800)])
        # top cap missing: centroid sits below the true center
        cloud = sf.PointCloud(np.vstack([lateral, bottom]))
        cap = Plane([0, 0, 1], 0.0, np.arange(800))
        completed = complete_shape(cloud, "cylinder", [cap])
        assert len(completed) > len(cloud)
        true_center_err_before = abs(centroid(cloud)[2] - 0.5)
        true_center_err_after = abs(centroid(completed)[2] - 0.5)
        assert true_center_err_after < true_center_err_before


class TestMedianNn:
    def test_grid_spacing(self):
        g = np.stack(np.meshgrid(*[np.arange(5.0)] * 3),
                     axis=-1).reshape(-1, 3) * 0.25
        assert abs(median_nn_distance(sf.PointCloud(g)) - 0.25) < 1e-12
