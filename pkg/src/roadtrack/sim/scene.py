"""Scene description for the synthetic roadside lidar."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import yaml

from roadtrack.model import BoundingBox, ModelError, RigidTransform
from roadtrack.preprocess import CropBox

_INTEGRATION_DT = 0.005


@dataclass(frozen=True)
class Mount:
    height: float = 5.9
    pitch: float = math.radians(20.0)
    roll: float = math.radians(180.0)

    def transform(self) -> RigidTransform:
        return RigidTransform(pitch=self.pitch, z_shift=self.height, roll=self.roll)


@dataclass(frozen=True)
class LidarModel:
    h_fov: float = math.radians(120.0)
    v_fov: float = math.radians(32.0)
    rings: int = 161
    az_step: float = math.radians(0.2)
    max_range: float = 30.0
    min_range: float = 0.5
    rate: float = 10.0
    noise_sigma: float = 0.02

    def __post_init__(self):
        if not self.rate > 0 or self.rings < 1 or not self.az_step > 0:
            raise ModelError("lidar rate, rings and az_step must be positive")

    @property
    def period(self) -> float:
        return 1.0 / self.rate

    def directions(self) -> np.ndarray:
        """Unit ray directions in the (unrolled) sensor frame, ring-major."""
        el = np.linspace(-self.v_fov / 2, self.v_fov / 2, self.rings)
        n_az = int(round(self.h_fov / self.az_step)) + 1
        az = np.linspace(-self.h_fov / 2, self.h_fov / 2, n_az)
        e, a = np.meshgrid(el, az, indexing="ij")
        d = np.stack([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)], axis=-1)
        return d.reshape(-1, 3)


@dataclass(frozen=True)
class Segment:
    duration: float
    accel: float = 0.0
    yaw_rate: float = 0.0


@dataclass(frozen=True)
class Trajectory:
    """Unicycle path made of constant (acceleration, yaw-rate) segments."""

    start_time: float
    x: float
    y: float
    heading: float
    speed: float
    segments: tuple[Segment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(Segment(**s) if isinstance(s, dict) else s for s in self.segments))
        if any(not s.duration > 0 for s in self.segments):
            raise ModelError("segment durations must be > 0")

    @property
    def end_time(self) -> float:
        return self.start_time + sum(s.duration for s in self.segments)

    @cached_property
    def _samples(self) -> dict[str, np.ndarray]:
        n = max(1, int(math.ceil((self.end_time - self.start_time) / _INTEGRATION_DT)))
        ts = self.start_time + np.arange(n + 1) * _INTEGRATION_DT
        bounds = np.cumsum([0.0] + [s.duration for s in self.segments]) + self.start_time
        xs, ys, hs, vs, ws = [self.x], [self.y], [self.heading], [self.speed], []
        x, y, h, v = self.x, self.y, self.heading, self.speed
        for k in range(n):
            t = ts[k] + _INTEGRATION_DT / 2
            seg = self.segments[min(int(np.searchsorted(bounds, t, side="right")) - 1, len(self.segments) - 1)]
            dt = _INTEGRATION_DT
            hm = h + seg.yaw_rate * dt / 2
            vm = max(v + seg.accel * dt / 2, 0.0)
            x += vm * math.cos(hm) * dt
            y += vm * math.sin(hm) * dt
            h += seg.yaw_rate * dt
            v = max(v + seg.accel * dt, 0.0)
            ws.append(seg.yaw_rate)
            xs.append(x)
            ys.append(y)
            hs.append(h)
            vs.append(v)
        ws.append(ws[-1] if ws else 0.0)
        return {k: np.asarray(a) for k, a in zip("txyhvw", (ts, xs, ys, hs, vs, ws))}

    def active(self, t: float) -> bool:
        return self.start_time - 1e-9 <= t <= self.end_time + 1e-9

    def state_at(self, t: float) -> dict[str, float]:
        s = self._samples
        out = {k: float(np.interp(t, s["t"], s[k])) for k in "xyhvw"}
        return {
            "x": out["x"],
            "y": out["y"],
            "heading": out["h"],
            "speed": out["v"],
            "vx": out["v"] * math.cos(out["h"]),
            "vy": out["v"] * math.sin(out["h"]),
            "yaw_rate": out["w"],
        }


@dataclass(frozen=True)
class Actor:
    name: str
    label: str
    dims: tuple[float, float, float]
    trajectory: Trajectory

    def __post_init__(self):
        if any(not d > 0 for d in self.dims):
            raise ModelError("actor dims must be > 0")
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))

    @property
    def dynamic(self) -> bool:
        tr = self.trajectory
        return tr.speed > 0 or any(s.accel != 0 for s in tr.segments)

    def box_at(self, t: float) -> BoundingBox | None:
        if not self.trajectory.active(t):
            return None
        s = self.trajectory.state_at(t)
        return BoundingBox((s["x"], s["y"]), s["heading"], self.dims)


@dataclass(frozen=True)
class StaticObject:
    label: str
    center: tuple[float, float]
    yaw: float
    dims: tuple[float, float, float]
    crop_margin: float = 0.2

    @property
    def box(self) -> BoundingBox:
        return BoundingBox(self.center, self.yaw, self.dims)

    def crop_box(self) -> CropBox:
        m = self.crop_margin
        l, w, h = self.dims
        return CropBox(BoundingBox(self.center, self.yaw, (l + 2 * m, w + 2 * m, h + m)), self.label)


@dataclass(frozen=True)
class VegetationBlob:
    """Ellipsoidal foliage; rays entering it return after an exponential depth."""

    label: str
    center: tuple[float, float, float]
    radii: tuple[float, float, float]
    mean_free_path: float = 0.3
    crop_margin: float = 0.25
    yaw: float = 0.0

    def crop_box(self) -> CropBox:
        rx, ry, rz = self.radii
        m = self.crop_margin
        top = self.center[2] + rz + m
        return CropBox(BoundingBox(self.center[:2], self.yaw, (2 * (rx + m), 2 * (ry + m), top)), self.label)


@dataclass(frozen=True)
class Shake:
    """Sinusoidal mount sway; ``amplitude`` is the peak linear acceleration (m/s^2)
    at the sensor, which sits ``lever`` meters from the sway pivot."""

    amplitude: float = 0.0
    frequency: float = 0.5
    lever: float = 5.9
    pitch_ratio: float = 0.1
    phase: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0 or not self.frequency > 0 or not self.lever > 0:
            raise ModelError("invalid shake profile")

    @property
    def angle_amplitude(self) -> float:
        return self.amplitude / (self.lever * (2 * math.pi * self.frequency) ** 2)

    def angle(self, t: float) -> float:
        return self.angle_amplitude * math.sin(2 * math.pi * self.frequency * t + self.phase)

    def offsets(self, t: float) -> tuple[float, float]:
        """(pitch, yaw) perturbation in radians; their norm is the sway angle."""
        a = self.angle(t)
        k = 1.0 / math.hypot(1.0, self.pitch_ratio)
        return a * self.pitch_ratio * k, a * k

    def sensor_displacement(self, t: float) -> float:
        return self.lever * self.angle(t)


@dataclass(frozen=True)
class Scene:
    name: str = "scene"
    duration: float = 5.0
    start: float = 0.0
    mount: Mount = field(default_factory=Mount)
    lidar: LidarModel = field(default_factory=LidarModel)
    actors: tuple[Actor, ...] = ()
    statics: tuple[StaticObject, ...] = ()
    vegetation: tuple[VegetationBlob, ...] = ()
    occluded: tuple[tuple[tuple[float, float], ...], ...] = ()
    shake: Shake = field(default_factory=Shake)
    seed: int = 0

    def __post_init__(self):
        for name in ("actors", "statics", "vegetation", "occluded"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def frame_times(self) -> np.ndarray:
        n = int(math.floor(self.duration * self.lidar.rate + 1e-9)) + 1
        return self.start + np.arange(n) / self.lidar.rate

    def crop_boxes(self) -> tuple[CropBox, ...]:
        return tuple(s.crop_box() for s in self.statics) + tuple(v.crop_box() for v in self.vegetation)


def apply_shake(scene: Scene, amplitude: float, **kwargs) -> Scene:
    if amplitude < 0:
        raise ModelError("shake amplitude must be >= 0")
    return replace(scene, shake=replace(scene.shake, amplitude=float(amplitude), **kwargs))


# -- YAML round trip ---------------------------------------------------------------
# Angles are degrees in files, radians in memory.

_ANGLE_KEYS = {"pitch", "roll", "h_fov", "v_fov", "az_step", "heading", "yaw_rate", "yaw", "phase"}


def _to_deg(d):
    if isinstance(d, dict):
        return {k: (math.degrees(v) if k in _ANGLE_KEYS and isinstance(v, (int, float)) else _to_deg(v)) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_to_deg(v) for v in d]
    return d


def _to_rad(d):
    if isinstance(d, dict):
        return {k: (math.radians(v) if k in _ANGLE_KEYS and isinstance(v, (int, float)) else _to_rad(v)) for k, v in d.items()}
    if isinstance(d, list):
        return [_to_rad(v) for v in d]
    return d


def scene_to_dict(scene: Scene) -> dict:
    return _to_deg(asdict(scene))


def scene_from_dict(d: dict) -> Scene:
    d = _to_rad(dict(d))
    try:
        actors = []
        for a in d.get("actors", []):
            tr = dict(a["trajectory"])
            tr["segments"] = tuple(Segment(**s) for s in tr.get("segments", []))
            actors.append(Actor(a["name"], a["label"], tuple(a["dims"]), Trajectory(**tr)))
        return Scene(
            name=d.get("name", "scene"),
            duration=float(d.get("duration", 5.0)),
            start=float(d.get("start", 0.0)),
            mount=Mount(**d.get("mount", {})),
            lidar=LidarModel(**d.get("lidar", {})),
            actors=tuple(actors),
            statics=tuple(
                StaticObject(s["label"], tuple(s["center"]), s.get("yaw", 0.0), tuple(s["dims"]), s.get("crop_margin", 0.2))
                for s in d.get("statics", [])
            ),
            vegetation=tuple(
                VegetationBlob(
                    v["label"],
                    tuple(v["center"]),
                    tuple(v["radii"]),
                    v.get("mean_free_path", 0.3),
                    v.get("crop_margin", 0.25),
                    v.get("yaw", 0.0),
                )
                for v in d.get("vegetation", [])
            ),
            occluded=tuple(tuple(tuple(p) for p in poly) for poly in d.get("occluded", [])),
            shake=Shake(**d.get("shake", {})),
            seed=int(d.get("seed", 0)),
        )
    except (KeyError, TypeError) as exc:
        raise ModelError(f"invalid scenario description: {exc}") from exc


def save_scene(scene: Scene, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(scene_to_dict(scene), sort_keys=False), "utf-8")


def load_scene(path: str | Path) -> Scene:
    return scene_from_dict(yaml.safe_load(Path(path).read_text("utf-8")))
