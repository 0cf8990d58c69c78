"""Frame-by-frame orchestration of preprocessing and tracking."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

from roadtrack.app.config import TrackerConfig
from roadtrack.associate import build_cost_matrix, compose_block, gate, solve_assignment
from roadtrack.detect import detect_objects
from roadtrack.fuse import estimate_control, predict
from roadtrack.manage import TrackSet, step_track_set
from roadtrack.model import ObjectTrack, PointCloud
from roadtrack.preprocess import preprocess_frame

log = logging.getLogger(__name__)

STAGES = ("preprocess", "predict", "detect", "associate", "manage", "export")


@dataclass(frozen=True)
class ExportedTrack:
    id: int
    x: float
    y: float
    yaw: float
    vx: float
    vy: float
    yaw_rate: float
    dims: tuple[float, float, float]
    dim_sigma: tuple[float, float, float]
    existence: float
    cls: dict[str, float]
    label: str
    fit_kind: str
    age: int
    coasting: bool

    @classmethod
    def from_track(cls, t: ObjectTrack, stamp: float) -> ExportedTrack:
        x = t.state.x
        return cls(
            id=t.id,
            x=float(x[0]),
            y=float(x[1]),
            yaw=float(x[4]),
            vx=float(x[2]),
            vy=float(x[3]),
            yaw_rate=float(x[5]),
            dims=tuple(float(v) for v in t.dims.d),
            dim_sigma=tuple(float(v) for v in t.dims.sigma),
            existence=float(t.existence),
            cls=t.cls.as_dict(),
            label=t.cls.argmax,
            fit_kind=t.fit_kind,
            age=t.age,
            coasting=t.last_seen < stamp,
        )

    def to_json(self) -> dict:
        """SI units, angles in degrees."""
        return {
            "id": self.id,
            "x": self.x,
            "y": self.y,
            "yaw_deg": math.degrees(self.yaw),
            "vx": self.vx,
            "vy": self.vy,
            "yaw_rate_deg": math.degrees(self.yaw_rate),
            "length": self.dims[0],
            "width": self.dims[1],
            "height": self.dims[2],
            "sigma_length": self.dim_sigma[0],
            "sigma_width": self.dim_sigma[1],
            "sigma_height": self.dim_sigma[2],
            "existence": self.existence,
            "class": self.label,
            "class_probabilities": self.cls,
            "fit": self.fit_kind,
            "age": self.age,
            "coasting": self.coasting,
        }

    @classmethod
    def from_json(cls, d: dict) -> ExportedTrack:
        return cls(
            id=int(d["id"]),
            x=float(d["x"]),
            y=float(d["y"]),
            yaw=math.radians(d["yaw_deg"]),
            vx=float(d["vx"]),
            vy=float(d["vy"]),
            yaw_rate=math.radians(d["yaw_rate_deg"]),
            dims=(float(d["length"]), float(d["width"]), float(d["height"])),
            dim_sigma=(float(d["sigma_length"]), float(d["sigma_width"]), float(d["sigma_height"])),
            existence=float(d["existence"]),
            cls={k: float(v) for k, v in d["class_probabilities"].items()},
            label=d["class"],
            fit_kind=d["fit"],
            age=int(d["age"]),
            coasting=bool(d["coasting"]),
        )


@dataclass(frozen=True)
class FrameResult:
    stamp: float
    tracks: tuple[ExportedTrack, ...]
    timings: dict[str, float] = field(default_factory=dict)
    total_ms: float = 0.0
    n_points: int = 0
    n_object_points: int = 0
    n_detections: int = 0
    merged_pairs: int = 0
    fallback_pairs: int = 0

    def to_json(self) -> dict:
        return {"stamp": self.stamp, "objects": [t.to_json() for t in self.tracks]}


class Tracker:
    """Stateful tracker; feed it sensor-frame clouds in time order."""

    def __init__(self, cfg: TrackerConfig):
        self.cfg = cfg
        self.tracks = TrackSet()
        self.stamp: float | None = None
        self.rejected_frames = 0

    def _predicted(self, stamp: float) -> list[ObjectTrack]:
        if self.stamp is None:
            return []
        dt = stamp - self.stamp
        out = []
        for t in self.tracks:
            u = estimate_control(t.history, self.cfg.t_history)
            out.append(replace(t, state=predict(t.state, u, dt, self.cfg.manage.noise)))
        return out

    def step(self, cloud: PointCloud) -> FrameResult | None:
        stamp = cloud.stamp
        if self.stamp is not None and not stamp > self.stamp:
            log.warning("dropping out-of-order frame at %.6f (last %.6f)", stamp, self.stamp)
            self.rejected_frames += 1
            return None
        cfg = self.cfg
        marks = [time.perf_counter()]

        obj = preprocess_frame(cloud, cfg.preprocess)
        marks.append(time.perf_counter())

        predicted = self._predicted(stamp)
        marks.append(time.perf_counter())

        det = detect_objects(obj, predicted, cfg.detect)
        marks.append(time.perf_counter())

        bound_tracks = set(det.bound.values())
        free_dets = [i for i in range(len(det.detections)) if i not in det.bound]
        free_tracks = [t for t in predicted if t.id not in bound_tracks]
        cost = build_cost_matrix([det.detections[i] for i in free_dets], free_tracks, free_dets)
        a_b = gate(solve_assignment(cost), cost, cfg.c_max)
        assignment = compose_block(det.bound, a_b)
        marks.append(time.perf_counter())

        predicted_set = replace(self.tracks, tracks={t.id: t for t in predicted})
        self.tracks = step_track_set(predicted_set, assignment, det.detections, stamp, cfg.manage)
        self.stamp = stamp
        marks.append(time.perf_counter())

        exported = tuple(ExportedTrack.from_track(t, stamp) for t in sorted(self.tracks, key=lambda t: t.id))
        marks.append(time.perf_counter())

        timings = {name: (b - a) * 1e3 for name, a, b in zip(STAGES, marks, marks[1:])}
        return FrameResult(
            stamp=stamp,
            tracks=exported,
            timings=timings,
            total_ms=(marks[-1] - marks[0]) * 1e3,
            n_points=len(cloud),
            n_object_points=len(obj),
            n_detections=len(det.detections),
            merged_pairs=len(det.bound),
            fallback_pairs=len(a_b.pairs),
        )


def run_pipeline(frames: Iterable[PointCloud], cfg: TrackerConfig) -> Iterator[FrameResult]:
    tracker = Tracker(cfg)
    for cloud in frames:
        res = tracker.step(cloud)
        if res is not None:
            yield res
