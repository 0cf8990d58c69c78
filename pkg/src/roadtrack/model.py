"""Shared domain types and frame conventions.

All geometry is SI (meters, seconds, radians). Three frames exist:
``sensor`` (the lidar link at its mounting pose), ``base`` (elevation zero
directly below the sensor, where tracking happens) and ``map`` (a planar
affine placement of the base frame).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:
    from roadtrack.dimension import DimensionEstimate, DimensionGrid

FRAMES = ("sensor", "base", "map")
CLASSES = ("pedestrian", "cyclist", "motorcycle", "car", "truck", "other")
N_CLASSES = len(CLASSES)
CLASS_INDEX = {name: i for i, name in enumerate(CLASSES)}

SYM_TOL = 1e-9
PSD_TOL = 1e-9


class ModelError(ValueError):
    """Raised when a value violates a domain-type invariant."""


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    r = math.remainder(float(a), 2.0 * math.pi)
    if r <= -math.pi:
        r += 2.0 * math.pi
    return r


def normalize_angles(a: np.ndarray) -> np.ndarray:
    r = np.remainder(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(r <= -np.pi, r + 2.0 * np.pi, r)


def _frozen_array(a, shape=None, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    if shape is not None and arr.shape != shape:
        raise ModelError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Point:
    x: float
    y: float
    z: float
    intensity: float | None = None

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ModelError("point coordinates must be finite")
        if self.intensity is not None and not self.intensity >= 0:
            raise ModelError("intensity must be >= 0")


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Timestamped points stored as an ``(N, 3)`` array in one named frame."""

    xyz: np.ndarray
    frame: str = "sensor"
    stamp: float = 0.0
    intensity: np.ndarray | None = None

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=float)
        if xyz.size == 0:
            xyz = xyz.reshape(0, 3)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise ModelError(f"xyz must have shape (N, 3), got {xyz.shape}")
        if self.frame not in FRAMES:
            raise ModelError(f"unknown frame {self.frame!r}")
        if not math.isfinite(self.stamp):
            raise ModelError("stamp must be finite")
        if not np.all(np.isfinite(xyz)):
            raise ModelError("point coordinates must be finite")
        object.__setattr__(self, "xyz", _frozen_array(xyz))
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=float).reshape(-1)
            if inten.shape[0] != xyz.shape[0]:
                raise ModelError("intensity length does not match point count")
            if np.any(inten < 0):
                raise ModelError("intensity must be >= 0")
            object.__setattr__(self, "intensity", _frozen_array(inten))

    def __len__(self) -> int:
        return self.xyz.shape[0]

    @classmethod
    def from_points(cls, points: Iterable[Point], frame: str = "sensor", stamp: float = 0.0) -> PointCloud:
        pts = list(points)
        xyz = np.array([(p.x, p.y, p.z) for p in pts], dtype=float).reshape(-1, 3)
        inten = None
        if pts and all(p.intensity is not None for p in pts):
            inten = np.array([p.intensity for p in pts], dtype=float)
        return cls(xyz, frame, stamp, inten)

    @property
    def points(self) -> list[Point]:
        inten = self.intensity
        return [
            Point(*row, None if inten is None else float(inten[i]))
            for i, row in enumerate(self.xyz.tolist())
        ]

    def subset(self, mask: np.ndarray) -> PointCloud:
        inten = None if self.intensity is None else self.intensity[mask]
        return PointCloud(self.xyz[mask], self.frame, self.stamp, inten)

    def with_xyz(self, xyz: np.ndarray, frame: str | None = None) -> PointCloud:
        return PointCloud(xyz, frame or self.frame, self.stamp, self.intensity)


def _rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Transform:
    """Homogeneous 4x4 transform between two named frames."""

    matrix: np.ndarray
    source: str
    target: str

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen_array(self.matrix, (4, 4)))

    def inverse(self) -> Transform:
        rot = self.matrix[:3, :3]
        t = self.matrix[:3, 3]
        inv = np.eye(4)
        inv[:3, :3] = rot.T
        inv[:3, 3] = -rot.T @ t
        return Transform(inv, self.target, self.source)

    def as_transform(self) -> Transform:
        return self


@dataclass(frozen=True)
class RigidTransform:
    """Mount transform ``T = translate_xy * R_yaw * S_z * R_pitch * R_roll``.

    A positive pitch tilts the sensor x-axis downward. Roll defaults to zero;
    yaw and planar translation place the result in the map frame.
    """

    pitch: float = 0.0
    z_shift: float = 0.0
    yaw: float = 0.0
    translation_xy: tuple[float, float] = (0.0, 0.0)
    roll: float = 0.0
    source: str = "sensor"
    target: str = "base"

    def __post_init__(self):
        if self.source not in FRAMES or self.target not in FRAMES:
            raise ModelError("unknown frame in transform")
        vals = (self.pitch, self.z_shift, self.yaw, self.roll, *self.translation_xy)
        if not all(math.isfinite(v) for v in vals):
            raise ModelError("transform parameters must be finite")
        object.__setattr__(self, "translation_xy", tuple(float(v) for v in self.translation_xy))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = _rot_z(self.yaw) @ _rot_y(self.pitch) @ _rot_x(self.roll)
        m[:3, 3] = (self.translation_xy[0], self.translation_xy[1], self.z_shift)
        return m

    def as_transform(self) -> Transform:
        return Transform(self.matrix(), self.source, self.target)

    def inverse(self) -> Transform:
        return self.as_transform().inverse()


def apply_transform(cloud: PointCloud, t: RigidTransform | Transform) -> PointCloud:
    tr = t.as_transform()
    if cloud.frame != tr.source:
        raise ModelError(f"cloud is in frame {cloud.frame!r}, transform expects {tr.source!r}")
    m = tr.matrix
    xyz = cloud.xyz @ m[:3, :3].T + m[:3, 3]
    return cloud.with_xyz(xyz, tr.target)


@dataclass(frozen=True)
class BoundingBox:
    """2.5D box: planar center and yaw, zero roll/pitch, bottom face on z = 0."""

    center: tuple[float, float]
    yaw: float
    dims: tuple[float, float, float]

    def __post_init__(self):
        center = tuple(float(v) for v in self.center)
        dims = tuple(float(v) for v in self.dims)
        if len(center) != 2 or len(dims) != 3:
            raise ModelError("box needs a 2D center and three dims")
        if not all(d > 0 and math.isfinite(d) for d in dims):
            raise ModelError(f"box dims must be positive, got {dims}")
        if not all(math.isfinite(c) for c in center):
            raise ModelError("box center must be finite")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @property
    def length(self) -> float:
        return self.dims[0]

    @property
    def width(self) -> float:
        return self.dims[1]

    @property
    def height(self) -> float:
        return self.dims[2]

    def to_local(self, xy: np.ndarray) -> np.ndarray:
        """Express planar points in the box frame (x along length)."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        d = np.asarray(xy, dtype=float)[..., :2] - np.asarray(self.center)
        return np.stack([c * d[..., 0] + s * d[..., 1], -s * d[..., 0] + c * d[..., 1]], axis=-1)

    def contains_xy(self, xy: np.ndarray, margin: float = 0.0) -> np.ndarray:
        local = self.to_local(xy)
        return (np.abs(local[..., 0]) <= self.length / 2 + margin) & (
            np.abs(local[..., 1]) <= self.width / 2 + margin
        )

    def contains(self, xyz: np.ndarray, margin: float = 0.0) -> np.ndarray:
        xyz = np.asarray(xyz, dtype=float)
        z = xyz[..., 2]
        return self.contains_xy(xyz, margin) & (z >= -margin) & (z <= self.height + margin)

    def corners(self) -> np.ndarray:
        l2, w2 = self.length / 2, self.width / 2
        local = np.array([[l2, w2], [-l2, w2], [-l2, -w2], [l2, -w2]])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.asarray(self.center)


def check_covariance(p: np.ndarray, name: str = "covariance") -> None:
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ModelError(f"{name} is not finite")
    if np.max(np.abs(p - p.T), initial=0.0) >= SYM_TOL:
        raise ModelError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(p).min() < -PSD_TOL:
        raise ModelError(f"{name} is not positive semidefinite")


@dataclass(frozen=True, eq=False)
class StateVector:
    """Mean ``[p_x, p_y, v_x, v_y, theta, omega]`` and its 6x6 covariance."""

    x: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(6)
        x[4] = normalize_angle(x[4])
        object.__setattr__(self, "x", _frozen_array(x, (6,)))
        cov = np.asarray(self.cov, dtype=float)
        object.__setattr__(self, "cov", _frozen_array(cov, (6, 6)))

    @property
    def p(self) -> np.ndarray:
        return self.x[0:2]

    @property
    def v(self) -> np.ndarray:
        return self.x[2:4]

    @property
    def theta(self) -> float:
        return float(self.x[4])

    @property
    def omega(self) -> float:
        return float(self.x[5])

    @property
    def speed(self) -> float:
        return float(np.hypot(self.x[2], self.x[3]))

    def check(self) -> None:
        check_covariance(self.cov, "state covariance")


@dataclass(frozen=True, eq=False)
class ClassVector:
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float).reshape(N_CLASSES)
        if np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > 1e-9:
            raise ModelError(f"invalid class vector {p}")
        object.__setattr__(self, "probabilities", _frozen_array(p))

    @property
    def argmax(self) -> str:
        return CLASSES[int(np.argmax(self.probabilities))]

    def as_dict(self) -> dict[str, float]:
        return {c: float(v) for c, v in zip(CLASSES, self.probabilities)}

    @classmethod
    def unclassified(cls) -> ClassVector:
        return cls(np.eye(N_CLASSES)[CLASS_INDEX["other"]])


def normalize_class_vector(raw: Sequence[float]) -> ClassVector:
    r = np.asarray(raw, dtype=float).reshape(N_CLASSES)
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ModelError("class vector entries must be finite and nonnegative")
    total = r.sum()
    if total <= 0:
        raise ModelError("degenerate class vector")
    p = r / total
    # absorb rounding so the sum invariant holds exactly enough
    p[np.argmax(p)] += 1.0 - p.sum()
    return ClassVector(np.clip(p, 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class HistoryEntry:
    stamp: float
    x: np.ndarray
    associated: bool
    dims: tuple[float, float, float]


@dataclass(frozen=True)
class TrackHistory:
    """Bounded, append-only record of past states; newest entry last."""

    entries: tuple[HistoryEntry, ...] = ()
    maxlen: int = 32

    def __post_init__(self):
        if self.maxlen < 1:
            raise ModelError("history maxlen must be >= 1")

    def __len__(self) -> int:
        return len(self.entries)

    def append(self, entry: HistoryEntry) -> TrackHistory:
        if self.entries and not entry.stamp > self.entries[-1].stamp:
            raise ModelError("history stamps must be strictly increasing")
        kept = self.entries[-(self.maxlen - 1):] if self.maxlen > 1 else ()
        return TrackHistory(kept + (entry,), self.maxlen)

    def last(self, n: int) -> tuple[HistoryEntry, ...]:
        return self.entries[-n:] if n > 0 else ()

    def since(self, stamp: float) -> tuple[HistoryEntry, ...]:
        return tuple(e for e in self.entries if e.stamp >= stamp)


@dataclass(frozen=True)
class ObjectTrack:
    id: int
    state: StateVector
    grid: DimensionGrid
    dims: DimensionEstimate
    existence: float
    cls: ClassVector
    history: TrackHistory
    age: int
    last_seen: float
    fit_kind: str = "lshape"

    def __post_init__(self):
        if not 0.0 <= self.existence <= 1.0:
            raise ModelError("existence must lie in [0, 1]")
        if self.age < 1:
            raise ModelError("track age must be >= 1")

    @property
    def box(self) -> BoundingBox:
        l, w, h = (max(float(v), 1e-3) for v in self.dims.d)
        return BoundingBox(tuple(self.state.p), self.state.theta, (l, w, h))


@dataclass(frozen=True)
class AffineMap:
    """Planar base -> map placement (rotation by ``yaw`` then translation)."""

    yaw: float = 0.0
    translation_xy: tuple[float, float] = (0.0, 0.0)

    def apply(self, xy: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        xy = np.asarray(xy, dtype=float)
        return xy @ np.array([[c, s], [-s, c]]) + np.asarray(self.translation_xy)


__all__ = [
    "AffineMap",
    "BoundingBox",
    "CLASSES",
    "CLASS_INDEX",
    "ClassVector",
    "FRAMES",
    "HistoryEntry",
    "ModelError",
    "N_CLASSES",
    "ObjectTrack",
    "Point",
    "PointCloud",
    "RigidTransform",
    "StateVector",
    "TrackHistory",
    "Transform",
    "apply_transform",
    "check_covariance",
    "normalize_angle",
    "normalize_angles",
    "normalize_class_vector",
]
