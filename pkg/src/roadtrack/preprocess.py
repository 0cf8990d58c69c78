"""Sensor-frame cloud -> approximate object cloud in the base frame.

Stages: mount transform, ground removal, crop-box removal of known static
objects, voxel-grid downsampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from roadtrack.model import BoundingBox, ModelError, PointCloud, RigidTransform, apply_transform

# 21 bits per axis; keys stay inside int64 for |index| < 2**20 cells
_KEY_BITS = 21
_KEY_OFFSET = 1 << (_KEY_BITS - 1)


@dataclass(frozen=True)
class CropBox:
    box: BoundingBox
    label: str = "static"


@dataclass(frozen=True)
class PreprocessConfig:
    ground_z_min: float = 0.2
    static_boxes: tuple[CropBox, ...] = ()
    voxel_leaf: float = 0.1
    sensor_transform: RigidTransform = field(
        default_factory=lambda: RigidTransform(pitch=np.deg2rad(20.0), z_shift=5.9, roll=np.pi)
    )

    def __post_init__(self):
        if not self.voxel_leaf > 0:
            raise ModelError("voxel_leaf must be > 0")
        if not np.isfinite(self.ground_z_min):
            raise ModelError("ground_z_min must be finite")
        object.__setattr__(self, "static_boxes", tuple(self.static_boxes))


def ground_mask(cloud: PointCloud, z_min: float) -> np.ndarray:
    """True for ground points (``z <= z_min``)."""
    return cloud.xyz[:, 2] <= z_min


def remove_ground(cloud: PointCloud, z_min: float) -> PointCloud:
    if cloud.frame != "base":
        raise ModelError("ground removal expects a base-frame cloud")
    return cloud.subset(~ground_mask(cloud, z_min))


def static_mask(cloud: PointCloud, boxes: Sequence[CropBox]) -> np.ndarray:
    inside = np.zeros(len(cloud), dtype=bool)
    for cb in boxes:
        inside |= cb.box.contains(cloud.xyz)
    return inside


def remove_static(cloud: PointCloud, boxes: Sequence[CropBox]) -> PointCloud:
    """Drop every point inside any crop box (box boundary counts as inside)."""
    if not boxes:
        return cloud
    return cloud.subset(~static_mask(cloud, boxes))


def voxel_keys(xyz: np.ndarray, leaf: float) -> np.ndarray:
    idx = np.floor(xyz / leaf).astype(np.int64) + _KEY_OFFSET
    if idx.size and (idx.min() < 0 or idx.max() >= (1 << _KEY_BITS)):
        raise ModelError("cloud extent exceeds the voxel index range")
    return (idx[:, 0] << (2 * _KEY_BITS)) | (idx[:, 1] << _KEY_BITS) | idx[:, 2]


def voxelize(cloud: PointCloud, leaf: float) -> PointCloud:
    """Replace the points of each occupied voxel by their centroid.

    The grid is axis aligned and anchored at the frame origin. Output is
    ordered by voxel key, so it is deterministic for a given input.
    """
    if not leaf > 0:
        raise ModelError("voxel leaf must be > 0")
    n = len(cloud)
    if n == 0:
        return cloud
    keys = voxel_keys(cloud.xyz, leaf)
    _, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    m = counts.shape[0]
    xyz = np.empty((m, 3))
    for k in range(3):
        xyz[:, k] = np.bincount(inverse, weights=cloud.xyz[:, k], minlength=m) / counts
    inten = None
    if cloud.intensity is not None:
        inten = np.bincount(inverse, weights=cloud.intensity, minlength=m) / counts
    return PointCloud(xyz, cloud.frame, cloud.stamp, inten)


def preprocess_frame(cloud_sensor: PointCloud, cfg: PreprocessConfig) -> PointCloud:
    if cloud_sensor.frame != cfg.sensor_transform.source:
        raise ModelError(f"expected a {cfg.sensor_transform.source!r}-frame cloud")
    base = apply_transform(cloud_sensor, cfg.sensor_transform)
    obj = remove_ground(base, cfg.ground_z_min)
    obj = remove_static(obj, cfg.static_boxes)
    return voxelize(obj, cfg.voxel_leaf)
