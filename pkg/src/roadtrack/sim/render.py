"""Ray casting of a scene into sensor-frame point clouds with ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from roadtrack.model import PointCloud, normalize_angle
from roadtrack.sim.scene import LidarModel, Scene

GROUND = -1
NOTHING = -2


@dataclass(frozen=True)
class GroundTruth:
    name: str
    label: str
    x: float
    y: float
    yaw: float
    vx: float
    vy: float
    yaw_rate: float
    dims: tuple[float, float, float]
    n_points: int
    dynamic: bool

    @property
    def visible(self) -> bool:
        return self.n_points > 0


@dataclass(frozen=True)
class RenderedFrame:
    cloud: PointCloud
    truth: tuple[GroundTruth, ...]
    index: int
    clutter_points: int


@lru_cache(maxsize=8)
def _directions(lidar: LidarModel) -> np.ndarray:
    d = lidar.directions()
    d.setflags(write=False)
    return d


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def sensor_rotation(scene: Scene, t: float) -> np.ndarray:
    """True sensor orientation in base, including any shake."""
    dp, dy = scene.shake.offsets(t) if scene.shake.amplitude > 0 else (0.0, 0.0)
    return _rot_z(dy) @ _rot_y(scene.mount.pitch + dp) @ _rot_x(scene.mount.roll)


def _sphere_candidates(origin, dirs, center, radius) -> np.ndarray:
    """Indices of rays that pass within ``radius`` of ``center``."""
    rel = np.asarray(center, dtype=float) - origin
    along = dirs @ rel
    miss2 = float(rel @ rel) - along**2
    inside = float(rel @ rel) <= radius**2
    return np.flatnonzero((miss2 <= radius**2) & (inside | (along > 0)))


def _culled(hit_fn, origin, dirs, center, radius, *args):
    out = np.full(dirs.shape[0], np.inf)
    idx = _sphere_candidates(origin, dirs, center, radius)
    if idx.size:
        out[idx] = hit_fn(origin, dirs[idx], *args)
    return out


def _box_hits(origin, dirs, center, yaw, dims):
    """Entry distance of each ray into an upright box (inf when missed)."""
    l, w, h = dims
    c, s = math.cos(yaw), math.sin(yaw)
    ox, oy = origin[0] - center[0], origin[1] - center[1]
    lo = np.array([c * ox + s * oy, -s * ox + c * oy, origin[2]])
    ld = np.stack([c * dirs[:, 0] + s * dirs[:, 1], -s * dirs[:, 0] + c * dirs[:, 1], dirs[:, 2]], axis=1)
    lo_b = np.array([-l / 2, -w / 2, 0.0])
    hi_b = np.array([l / 2, w / 2, h])
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / ld
        t1 = (lo_b - lo) * inv
        t2 = (hi_b - lo) * inv
    tmin = np.nanmax(np.minimum(t1, t2), axis=1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=1)
    hit = (tmax >= np.maximum(tmin, 0.0)) & (tmin > 0)
    return np.where(hit, tmin, np.inf)


def _ellipsoid_hits(origin, dirs, center, radii, yaw, mean_free_path, rng):
    """Foliage returns: each ray entering the ellipsoid stops after an
    exponentially distributed depth, or passes through."""
    r = np.asarray(radii, dtype=float)
    rot = _rot_z(-yaw)
    o = (rot @ (np.asarray(origin) - np.asarray(center))) / r
    d = (dirs @ rot.T) / r
    a = np.einsum("ij,ij->i", d, d)
    b = 2.0 * d @ o
    c = float(o @ o) - 1.0
    disc = b * b - 4 * a * c
    out = np.full(dirs.shape[0], np.inf)
    ok = disc > 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t0 = (-b - sq) / (2 * a)
    t1 = (-b + sq) / (2 * a)
    ok &= t1 > 0
    idx = np.flatnonzero(ok)
    if idx.size:
        depth = rng.exponential(mean_free_path, idx.size)
        t_hit = np.maximum(t0[idx], 0.0) + depth
        inside = t_hit < t1[idx]
        out[idx[inside]] = t_hit[inside]
    return out


def _box_middle(center, dims):
    return (center[0], center[1], dims[2] / 2)


def _half_diag(dims) -> float:
    return 0.5 * math.sqrt(dims[0] ** 2 + dims[1] ** 2 + dims[2] ** 2) + 1e-6


def render_frame(scene: Scene, t: float, index: int | None = None) -> RenderedFrame:
    lidar = scene.lidar
    if index is None:
        index = int(round((t - scene.start) * lidar.rate))
    rng = np.random.default_rng([scene.seed, index])
    rot = sensor_rotation(scene, t)
    origin = np.array([0.0, 0.0, scene.mount.height])
    dirs = _directions(lidar) @ rot.T

    n = dirs.shape[0]
    best = np.full(n, np.inf)
    owner = np.full(n, NOTHING, dtype=np.int64)

    down = dirs[:, 2] < -1e-9
    tg = np.where(down, -origin[2] / np.where(down, dirs[:, 2], -1.0), np.inf)
    upd = tg < best
    best[upd], owner[upd] = tg[upd], GROUND

    truth_boxes = []
    for i, actor in enumerate(scene.actors):
        box = actor.box_at(t)
        truth_boxes.append(box)
        if box is None:
            continue
        th = _culled(_box_hits, origin, dirs, _box_middle(box.center, box.dims), _half_diag(box.dims), box.center, box.yaw, box.dims)
        upd = th < best
        best[upd], owner[upd] = th[upd], i

    n_actors = len(scene.actors)
    for j, s in enumerate(scene.statics):
        th = _culled(_box_hits, origin, dirs, _box_middle(s.center, s.dims), _half_diag(s.dims), s.center, s.yaw, s.dims)
        upd = th < best
        best[upd], owner[upd] = th[upd], n_actors + j
    n_static = len(scene.statics)
    for k, v in enumerate(scene.vegetation):
        th = _culled(_ellipsoid_hits, origin, dirs, v.center, max(v.radii), v.center, v.radii, v.yaw, v.mean_free_path, rng)
        upd = th < best
        best[upd], owner[upd] = th[upd], n_actors + n_static + k

    keep = np.isfinite(best) & (best >= lidar.min_range) & (best <= lidar.max_range)
    rng_t = best[keep]
    if lidar.noise_sigma > 0:
        rng_t = rng_t + rng.normal(0.0, lidar.noise_sigma, rng_t.size)
    pts_base = origin + rng_t[:, None] * dirs[keep]
    pts_sensor = (pts_base - origin) @ rot
    own = owner[keep]
    intensity = np.where(own == GROUND, 0.1, 0.5).astype(np.float64)
    cloud = PointCloud(pts_sensor, "sensor", float(t), intensity)

    counts = np.bincount(own[own >= 0], minlength=n_actors + n_static + len(scene.vegetation))
    truth = []
    for i, (actor, box) in enumerate(zip(scene.actors, truth_boxes)):
        if box is None:
            continue
        s = actor.trajectory.state_at(t)
        truth.append(
            GroundTruth(
                actor.name,
                actor.label,
                s["x"],
                s["y"],
                normalize_angle(s["heading"]),
                s["vx"],
                s["vy"],
                s["yaw_rate"],
                actor.dims,
                int(counts[i]),
                actor.dynamic,
            )
        )
    return RenderedFrame(cloud, tuple(truth), index, int(counts[n_actors:].sum()))


def render_scene(scene: Scene):
    """Yield rendered frames for every sample time of the scene."""
    for k, t in enumerate(scene.frame_times()):
        yield render_frame(scene, float(t), k)
