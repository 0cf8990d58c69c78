"""Track initiation, visibility-dependent deletion and the per-frame update."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from roadtrack import classify as classify_mod
from roadtrack import dimension as dim_mod
from roadtrack import existence as ex_mod
from roadtrack.associate import AssignmentResult
from roadtrack.detect import Detection
from roadtrack.fuse import Measurement, NoiseConfig, resolve_yaw, update
from roadtrack.model import (
    ClassVector,
    HistoryEntry,
    ModelError,
    ObjectTrack,
    StateVector,
    TrackHistory,
    normalize_angle,
)

log = logging.getLogger(__name__)

LABELS = ("visible", "occluded", "outside")
DEFAULT_THRESHOLDS = {"visible": 1.0, "occluded": 2.0, "outside": 0.0}


class VisibilityMapError(ValueError):
    pass


def points_in_polygon(xy: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd rule; points exactly on an edge may land either way."""
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    x, y = xy[:, 0], xy[:, 1]
    inside = np.zeros(xy.shape[0], dtype=bool)
    px, py = poly[:, 0], poly[:, 1]
    j = len(poly) - 1
    for i in range(len(poly)):
        crosses = (py[i] > y) != (py[j] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (px[j] - px[i]) * (y - py[i]) / (py[j] - py[i]) + px[i]
        inside ^= crosses & (x < xint)
        j = i
    return inside


@dataclass(frozen=True)
class Sector:
    """Sensor footprint: apex, heading, full opening angle, range."""

    origin: tuple[float, float] = (0.0, 0.0)
    heading: float = 0.0
    fov: float = math.radians(120.0)
    max_range: float = 30.0

    def contains(self, xy: np.ndarray) -> np.ndarray:
        d = np.atleast_2d(np.asarray(xy, dtype=float)) - np.asarray(self.origin)
        r = np.hypot(d[:, 0], d[:, 1])
        ang = np.arctan2(d[:, 1], d[:, 0]) - self.heading
        ang = np.remainder(ang + np.pi, 2 * np.pi) - np.pi
        return (r <= self.max_range) & (np.abs(ang) <= self.fov / 2 + 1e-12)


@dataclass(frozen=True)
class VisibilityMap:
    """Static workspace labeling.

    Lookup order: occluded polygons, visible polygons, the sensor sector
    (visible), otherwise outside.
    """

    regions: tuple[tuple[str, np.ndarray], ...] = ()
    sector: Sector | None = field(default_factory=Sector)
    thresholds: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))

    def __post_init__(self):
        regs = []
        for label, poly in self.regions:
            if label not in ("visible", "occluded"):
                raise VisibilityMapError(f"unknown region label {label!r}")
            poly = np.asarray(poly, dtype=float).reshape(-1, 2)
            if poly.shape[0] < 3:
                raise VisibilityMapError("a region polygon needs at least 3 vertices")
            regs.append((label, poly))
        object.__setattr__(self, "regions", tuple(regs))
        th = dict(DEFAULT_THRESHOLDS)
        th.update(self.thresholds)
        if any(v < 0 for v in th.values()) or set(th) - set(LABELS):
            raise VisibilityMapError("thresholds must be >= 0 and use known labels")
        object.__setattr__(self, "thresholds", th)

    def label_at(self, xy) -> str:
        p = np.asarray(xy, dtype=float).reshape(1, 2)
        for wanted in ("occluded", "visible"):
            for label, poly in self.regions:
                if label == wanted and points_in_polygon(p, poly)[0]:
                    return label
        if self.sector is not None and self.sector.contains(p)[0]:
            return "visible"
        return "outside"

    def t_delete(self, xy) -> float:
        return self.thresholds[self.label_at(xy)]


def parse_visibility_map(text: str) -> VisibilityMap:
    """Grammar, one statement per line (``#`` starts a comment)::

        threshold <visible|occluded|outside> <seconds>
        sector <x> <y> <heading_deg> <fov_deg> <range_m>
        sector none
        polygon <visible|occluded> <x1> <y1> <x2> <y2> <x3> <y3> ...
    """
    regions, thresholds = [], {}
    sector: Sector | None = Sector()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            kind = parts[0]
            if kind == "threshold":
                thresholds[parts[1]] = float(parts[2])
            elif kind == "sector":
                if parts[1] == "none":
                    sector = None
                else:
                    x, y, hd, fov, rng = map(float, parts[1:6])
                    sector = Sector((x, y), math.radians(hd), math.radians(fov), rng)
            elif kind == "polygon":
                coords = [float(v) for v in parts[2:]]
                if len(coords) % 2:
                    raise ValueError("odd number of coordinates")
                regions.append((parts[1], np.array(coords).reshape(-1, 2)))
            else:
                raise ValueError(f"unknown statement {kind!r}")
        except (IndexError, ValueError) as exc:
            raise VisibilityMapError(f"visibility map line {lineno}: {raw!r} ({exc})") from exc
    return VisibilityMap(tuple(regions), sector, thresholds)


def format_visibility_map(vis: VisibilityMap) -> str:
    out = [f"threshold {k} {v:g}" for k, v in vis.thresholds.items()]
    s = vis.sector
    if s is None:
        out.append("sector none")
    else:
        out.append(
            f"sector {s.origin[0]:g} {s.origin[1]:g} {math.degrees(s.heading):g} "
            f"{math.degrees(s.fov):g} {s.max_range:g}"
        )
    for label, poly in vis.regions:
        out.append("polygon " + label + " " + " ".join(f"{v:g}" for v in poly.reshape(-1)))
    return "\n".join(out) + "\n"


def load_visibility_map(path: str | Path) -> VisibilityMap:
    return parse_visibility_map(Path(path).read_text("utf-8"))


# -- tracks ------------------------------------------------------------------------


@dataclass(frozen=True)
class ManageConfig:
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    grid: dim_mod.GridConfig = field(default_factory=dim_mod.GridConfig)
    existence: ex_mod.ExistenceConfig = field(default_factory=ex_mod.ExistenceConfig)
    class_model: classify_mod.ClassModel = field(default_factory=classify_mod.load_class_model)
    visibility: VisibilityMap = field(default_factory=VisibilityMap)
    init_sigma_velocity: float = 5.0
    init_sigma_yaw_rate: float = 0.5
    history_len: int = 32
    heading_min_speed: float = 2.0
    cylinder_yaw_sigma: float = math.pi


@dataclass(frozen=True)
class TrackSet:
    tracks: Mapping[int, ObjectTrack] = field(default_factory=dict)
    next_id: int = 1
    rejected: int = 0

    def __len__(self) -> int:
        return len(self.tracks)

    def __iter__(self):
        return iter(self.tracks.values())

    def ids(self) -> list[int]:
        return list(self.tracks)


def measurement_for(det: Detection, noise: NoiseConfig, cfg: ManageConfig) -> Measurement:
    r = noise.default_R()
    if det.fit_kind == "cylinder":
        # cylinder yaw is a convention, not an observation
        r[2, 2] = cfg.cylinder_yaw_sigma**2
    return Measurement([det.box.center[0], det.box.center[1], det.box.yaw], r)


def initiate(det: Detection, stamp: float, track_id: int, cfg: ManageConfig) -> ObjectTrack:
    """New track from an unmatched detection; caller checks the visibility rule."""
    r = cfg.noise.default_R()
    yaw_var = cfg.cylinder_yaw_sigma**2 if det.fit_kind == "cylinder" else r[2, 2]
    cov = np.diag(
        [r[0, 0], r[1, 1], cfg.init_sigma_velocity**2, cfg.init_sigma_velocity**2, yaw_var, cfg.init_sigma_yaw_rate**2]
    )
    x = [det.box.center[0], det.box.center[1], 0.0, 0.0, det.box.yaw, 0.0]
    grid = dim_mod.update_grid(dim_mod.init_grid(cfg.grid), det.box.dims, det.dim_sigma, cfg.grid)
    dims = dim_mod.estimate(grid)
    history = TrackHistory((), cfg.history_len).append(HistoryEntry(stamp, np.array(x, dtype=float), True, tuple(dims.d)))
    return ObjectTrack(
        id=track_id,
        state=StateVector(x, cov),
        grid=grid,
        dims=dims,
        existence=0.5,
        cls=ClassVector.unclassified(),
        history=history,
        age=1,
        last_seen=stamp,
        fit_kind=det.fit_kind,
    )


def delete_stale(tracks: TrackSet, vis: VisibilityMap, now: float) -> TrackSet:
    kept = {}
    for tid, t in tracks.tracks.items():
        if now - t.last_seen > vis.t_delete(t.state.p) + 1e-9:
            continue
        kept[tid] = t
    return replace(tracks, tracks=kept)


def _align_heading(state: StateVector, min_speed: float) -> tuple[StateVector, int]:
    """Turn the box frame by quarter turns so its x-axis follows a clearly
    observed velocity. Returns the new state and the number of quarter turns."""
    if state.speed < min_speed:
        return state, 0
    heading = math.atan2(state.x[3], state.x[2])
    k = int(round(normalize_angle(heading - state.theta) / (math.pi / 2)))
    if k == 0:
        return state, 0
    x = state.x.copy()
    x[4] = normalize_angle(x[4] + k * math.pi / 2)
    return StateVector(x, state.cov), k


def _refresh(track: ObjectTrack, cfg: ManageConfig) -> ObjectTrack:
    factors = ex_mod.compute_factors(track, cfg.existence)
    return replace(track, existence=ex_mod.combine(factors))


def update_track(track: ObjectTrack, det: Detection, stamp: float, cfg: ManageConfig) -> ObjectTrack:
    z = measurement_for(det, cfg.noise, cfg)
    state = update(track.state, z)
    state, turns = _align_heading(state, cfg.heading_min_speed)
    dims_meas = np.array(det.box.dims, dtype=float)
    sig = np.array(det.dim_sigma, dtype=float)
    if det.fit_kind == "lshape":
        _, k = resolve_yaw(track.state.theta, det.box.yaw)
        if k % 2:
            dims_meas[[0, 1]] = dims_meas[[1, 0]]
            sig[[0, 1]] = sig[[1, 0]]
    grid = dim_mod.update_grid(track.grid, dims_meas, sig, cfg.grid)
    if turns % 2:
        grid = dim_mod.swap_length_width(grid)
    dims = dim_mod.estimate(grid)
    cls = classify_mod.classify(dims, cfg.class_model)
    history = track.history.append(HistoryEntry(stamp, state.x.copy(), True, tuple(dims.d)))
    t = replace(
        track,
        state=state,
        grid=grid,
        dims=dims,
        cls=cls,
        history=history,
        age=track.age + 1,
        last_seen=stamp,
        fit_kind=det.fit_kind,
    )
    return _refresh(t, cfg)


def coast_track(track: ObjectTrack, stamp: float, cfg: ManageConfig) -> ObjectTrack:
    history = track.history.append(HistoryEntry(stamp, track.state.x.copy(), False, tuple(track.dims.d)))
    return _refresh(replace(track, history=history, age=track.age + 1), cfg)


def step_track_set(
    tracks: TrackSet,
    assignments: AssignmentResult,
    detections: Sequence[Detection],
    stamp: float,
    cfg: ManageConfig,
) -> TrackSet:
    """Apply one frame: update matched, coast unmatched, initiate, delete.

    ``tracks`` must already be predicted to ``stamp``.
    """
    pairs = assignments.as_dict()
    by_track = {t: d for d, t in pairs.items()}
    if len(by_track) != len(pairs):
        raise ModelError("assignments are not one-to-one")
    out: dict[int, ObjectTrack] = {}
    for tid, track in tracks.tracks.items():
        if tid in by_track:
            out[tid] = update_track(track, detections[by_track[tid]], stamp, cfg)
        else:
            out[tid] = coast_track(track, stamp, cfg)
    next_id, rejected = tracks.next_id, tracks.rejected
    for i, det in enumerate(detections):
        if i in pairs:
            continue
        if cfg.visibility.label_at(det.box.center) == "occluded":
            rejected += 1
            continue
        out[next_id] = initiate(det, stamp, next_id, cfg)
        next_id += 1
    return delete_stale(TrackSet(out, next_id, rejected), cfg.visibility, stamp)
