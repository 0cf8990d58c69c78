"""Latency benchmark over a frame sequence.

Times are measured in-process from the moment a cloud is handed to the
tracker until its object list is built. Sensor driver and transport delays
are not part of the measurement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from roadtrack.app.config import TrackerConfig
from roadtrack.app.evaluate import LATENCY_BINS_MS, latency_histogram
from roadtrack.app.pipeline import STAGES, run_pipeline
from roadtrack.model import ModelError, PointCloud

MIN_FRAMES = 100


class BenchError(ModelError):
    pass


@dataclass(frozen=True)
class LatencyStats:
    mean: float
    p50: float
    p95: float
    p99: float
    max: float

    @classmethod
    def of(cls, values) -> LatencyStats:
        v = np.asarray(values, dtype=float)
        if not v.size:
            return cls(math.nan, math.nan, math.nan, math.nan, math.nan)
        p50, p95, p99 = np.percentile(v, [50, 95, 99])
        return cls(float(v.mean()), float(p50), float(p95), float(p99), float(v.max()))


@dataclass(frozen=True)
class BenchReport:
    n_frames: int
    deadline_ms: float
    total: LatencyStats
    stages: dict[str, LatencyStats]
    histogram: tuple[int, ...]
    bins_ms: tuple[float, ...]
    deadline_fraction: float
    under_50ms_fraction: float
    mean_points: float

    def metrics(self) -> dict[str, float]:
        out = {
            "frames": self.n_frames,
            "mean_points": self.mean_points,
            "deadline_ms": self.deadline_ms,
            "deadline_fraction": self.deadline_fraction,
            "under_50ms_fraction": self.under_50ms_fraction,
            "total_mean_ms": self.total.mean,
            "total_p50_ms": self.total.p50,
            "total_p95_ms": self.total.p95,
            "total_p99_ms": self.total.p99,
            "total_max_ms": self.total.max,
        }
        for name, s in self.stages.items():
            out[f"{name}_mean_ms"] = s.mean
        return out

    def histogram_lines(self) -> list[str]:
        lines = []
        for lo, hi, n in zip(self.bins_ms, self.bins_ms[1:], self.histogram):
            label = f"{lo:g}-{hi:g} ms" if math.isfinite(hi) else f">= {lo:g} ms"
            lines.append(f"{label:>14} {n:6d}")
        return lines


def bench_results(results, deadline_ms: float = 100.0, min_frames: int = MIN_FRAMES) -> BenchReport:
    results = list(results)
    if len(results) < min_frames:
        raise BenchError(f"benchmark needs at least {min_frames} frames, got {len(results)}")
    totals = np.array([r.total_ms for r in results], dtype=float)
    stages = {s: LatencyStats.of([r.timings.get(s, 0.0) for r in results]) for s in STAGES}
    return BenchReport(
        n_frames=len(results),
        deadline_ms=deadline_ms,
        total=LatencyStats.of(totals),
        stages=stages,
        histogram=latency_histogram(totals),
        bins_ms=LATENCY_BINS_MS,
        deadline_fraction=float(np.mean(totals < deadline_ms)),
        under_50ms_fraction=float(np.mean(totals < 50.0)),
        mean_points=float(np.mean([r.n_points for r in results])),
    )


def bench(frames: Iterable[PointCloud], cfg: TrackerConfig, deadline_ms: float = 100.0, min_frames: int = MIN_FRAMES) -> BenchReport:
    return bench_results(run_pipeline(frames, cfg), deadline_ms, min_frames)
