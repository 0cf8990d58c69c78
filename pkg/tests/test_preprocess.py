import math
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roadtrack.model import BoundingBox, ModelError, PointCloud, RigidTransform
from roadtrack.preprocess import (
    CropBox,
    PreprocessConfig,
    preprocess_frame,
    remove_ground,
    remove_static,
    voxelize,
)


def base_cloud(xyz, intensity=None):
    return PointCloud(np.asarray(xyz, dtype=float).reshape(-1, 3), "base", 0.0, intensity)


def test_remove_ground_boundary_is_ground():
    out = remove_ground(base_cloud([[0, 0, 0.1], [0, 0, 0.2], [0, 0, 0.3]]), 0.2)
    np.testing.assert_allclose(out.xyz, [[0, 0, 0.3]])


def test_remove_ground_empty_and_frame_check():
    assert len(remove_ground(base_cloud(np.empty((0, 3))), 0.2)) == 0
    with pytest.raises(ModelError):
        remove_ground(PointCloud(np.zeros((1, 3)), "sensor"), 0.2)


def test_remove_ground_matches_scan_filter():
    rng = np.random.default_rng(1)
    xyz = rng.uniform([-5, -5, -1], [5, 5, 2], size=(1000, 3))
    out = remove_ground(base_cloud(xyz), 0.2)
    kept = [p for p in xyz.tolist() if p[2] > 0.2]
    assert len(out) == len(kept)
    np.testing.assert_array_equal(out.xyz, np.array(kept))


def test_remove_static_examples():
    c = base_cloud([[5, 0, 1], [8, 0, 1]])
    assert remove_static(c, ()) is c
    box = CropBox(BoundingBox((5, 0), 0.0, (2, 2, 4)))
    np.testing.assert_allclose(remove_static(c, [box]).xyz, [[8, 0, 1]])


def test_remove_static_yawed_box_matches_rotation_oracle():
    rng = np.random.default_rng(2)
    xyz = rng.uniform([0, -4, 0], [8, 4, 3], size=(500, 3))
    yaw = math.radians(45.0)
    box = CropBox(BoundingBox((4.0, 0.0), yaw, (3.0, 1.5, 2.0)))
    out = remove_static(base_cloud(xyz), [box])
    kept = []
    for x, y, z in xyz:
        dx, dy = x - 4.0, y
        lx = math.cos(yaw) * dx + math.sin(yaw) * dy
        ly = -math.sin(yaw) * dx + math.cos(yaw) * dy
        inside = abs(lx) <= 1.5 and abs(ly) <= 0.75 and 0.0 <= z <= 2.0
        if not inside:
            kept.append((x, y, z))
    np.testing.assert_array_equal(out.xyz, np.array(kept))
    assert 0 < len(out) < 500


def test_voxelize_examples():
    out = voxelize(base_cloud([[0.02, 0.02, 0.02], [0.03, 0.02, 0.02]]), 0.1)
    np.testing.assert_allclose(out.xyz, [[0.025, 0.02, 0.02]])
    out = voxelize(base_cloud([[0.05, 0.05, 0.05], [0.15, 0.05, 0.05]]), 0.1)
    assert len(out) == 2
    with pytest.raises(ModelError):
        voxelize(base_cloud([[0, 0, 0]]), 0.0)


def test_voxelize_averages_intensity():
    out = voxelize(base_cloud([[0.01, 0, 0], [0.02, 0, 0]], [1.0, 3.0]), 0.1)
    assert out.intensity.tolist() == [2.0]


def hash_grid_count(xyz, leaf):
    cells = set()
    for x, y, z in xyz.tolist():
        cells.add((math.floor(x / leaf), math.floor(y / leaf), math.floor(z / leaf)))
    return len(cells)


def test_voxel_count_equals_hash_grid_oracle():
    rng = np.random.default_rng(3)
    xyz = rng.uniform(-3, 3, size=(10_000, 3))
    assert len(voxelize(base_cloud(xyz), 0.1)) == hash_grid_count(xyz, 0.1)


def hash_grid_centroids(xyz, leaf):
    groups = defaultdict(list)
    for p in xyz.tolist():
        groups[tuple(math.floor(v / leaf) for v in p)].append(p)
    return {k: np.mean(v, axis=0) for k, v in groups.items()}


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.05, 1.0), st.integers(1, 400))
def test_voxelize_properties(seed, leaf, n):
    rng = np.random.default_rng(seed)
    xyz = rng.uniform(-5, 5, size=(n, 3))
    out = voxelize(base_cloud(xyz), leaf)
    assert len(out) == hash_grid_count(xyz, leaf) <= n
    oracle = hash_grid_centroids(xyz, leaf)
    got = sorted(map(tuple, np.round(out.xyz, 9)))
    want = sorted(map(tuple, np.round(np.array(list(oracle.values())), 9)))
    assert got == want
    d = np.linalg.norm(out.xyz[:, None] - xyz[None], axis=2).min(axis=1)
    assert d.max() <= math.sqrt(3) / 2 * leaf + 1e-9


def test_voxelize_deterministic():
    rng = np.random.default_rng(4)
    xyz = rng.uniform(-3, 3, size=(2000, 3))
    a = voxelize(base_cloud(xyz), 0.1)
    b = voxelize(base_cloud(xyz), 0.1)
    assert a.xyz.tobytes() == b.xyz.tobytes()


def _sensor_cloud_from_base(xyz_base, tf):
    inv = tf.inverse().matrix
    xyz = np.asarray(xyz_base) @ inv[:3, :3].T + inv[:3, 3]
    return PointCloud(xyz, "sensor", 0.0)


def test_preprocess_ground_only_frame_is_empty():
    cfg = PreprocessConfig()
    rng = np.random.default_rng(5)
    ground = np.column_stack([rng.uniform(5, 25, 300), rng.uniform(-8, 8, 300), rng.uniform(-0.05, 0.1, 300)])
    assert len(preprocess_frame(_sensor_cloud_from_base(ground, cfg.sensor_transform), cfg)) == 0


def test_preprocess_stages_are_monotone_and_remove_statics():
    cfg = PreprocessConfig(static_boxes=(CropBox(BoundingBox((10.0, 0.0), 0.0, (1.0, 1.0, 8.0)), "pole"),))
    rng = np.random.default_rng(6)
    car = rng.uniform([15, -1, 0.3], [19, 1, 1.5], size=(400, 3))
    pole = rng.uniform([9.8, -0.2, 0.3], [10.2, 0.2, 7.0], size=(100, 3))
    ground = np.column_stack([rng.uniform(5, 25, 300), rng.uniform(-8, 8, 300), np.zeros(300)])
    cloud = _sensor_cloud_from_base(np.vstack([car, pole, ground]), cfg.sensor_transform)
    out = preprocess_frame(cloud, cfg)
    assert out.frame == "base"
    assert 0 < len(out) <= 400
    assert np.all(out.xyz[:, 0] >= 15 - 1e-6)
    with pytest.raises(ModelError):
        preprocess_frame(PointCloud(np.zeros((1, 3)), "base"), cfg)


def test_config_validation():
    with pytest.raises(ModelError):
        PreprocessConfig(voxel_leaf=0.0)
    with pytest.raises(ModelError):
        PreprocessConfig(ground_z_min=math.nan)
    assert PreprocessConfig().sensor_transform.z_shift == 5.9
    assert isinstance(PreprocessConfig().sensor_transform, RigidTransform)
