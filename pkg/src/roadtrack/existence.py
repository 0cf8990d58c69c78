"""Heuristic existence probability from six weighted track-quality factors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from roadtrack.model import ModelError, ObjectTrack

FACTOR_NAMES = ("age", "association", "aspect_ratio", "volume", "velocity", "yaw_rate")


@dataclass(frozen=True)
class ExistenceConfig:
    k_age: float = 0.4
    n_offset: float = 5.0
    t_ar: float = 1.0
    t_volume: float = 1.0
    t_velocity: float = 2.0
    t_yaw_rate: float = 1.0
    window: int = 20
    weights: tuple[float, ...] = (1 / 6,) * 6

    def __post_init__(self):
        if min(self.t_ar, self.t_volume, self.t_velocity, self.t_yaw_rate) <= 0:
            raise ModelError("existence thresholds must be > 0")
        if self.window < 1:
            raise ModelError("existence window must be >= 1")
        w = tuple(float(x) for x in self.weights)
        if len(w) != 6 or min(w) < 0 or abs(sum(w) - 1.0) > 1e-9:
            raise ModelError("existence weights must be six nonnegative values summing to 1")
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class ExistenceFactors:
    f_age: float
    f_association: float
    f_aspect_ratio: float
    f_volume: float
    f_velocity: float
    f_yaw_rate: float
    weights: tuple[float, ...] = (1 / 6,) * 6

    def __post_init__(self):
        for name in ("f_age", "f_association", "f_aspect_ratio", "f_volume", "f_velocity", "f_yaw_rate"):
            object.__setattr__(self, name, min(max(float(getattr(self, name)), 0.0), 1.0))
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ModelError("existence weights must sum to 1")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.f_age, self.f_association, self.f_aspect_ratio, self.f_volume, self.f_velocity, self.f_yaw_rate]
        )


def age_factor(n: int, k_age: float = 0.4, n_offset: float = 5.0) -> float:
    return 1.0 / (1.0 + math.exp(-k_age * (n - n_offset)))


def variability_factor(samples, threshold: float) -> float:
    """``clamp(1 - std/threshold)``; fewer than two samples give 1."""
    s = np.asarray(samples, dtype=float)
    if s.shape[0] < 2:
        return 1.0
    return min(max(1.0 - float(np.std(s, ddof=1)) / threshold, 0.0), 1.0)


def compute_factors(track: ObjectTrack, cfg: ExistenceConfig) -> ExistenceFactors:
    if track.age < 1:
        raise ModelError("track age must be >= 1")
    window = track.history.last(cfg.window)
    if window:
        f_assoc = sum(e.associated for e in window) / len(window)
    else:
        f_assoc = 1.0
    dims = np.array([e.dims for e in window], dtype=float).reshape(-1, 3)
    aspect = dims[:, 0] / np.maximum(dims[:, 1], 1e-3)
    volume = dims.prod(axis=1)
    xs = np.array([e.x for e in window], dtype=float).reshape(-1, 6)
    speed = np.hypot(xs[:, 2], xs[:, 3])
    return ExistenceFactors(
        age_factor(track.age, cfg.k_age, cfg.n_offset),
        f_assoc,
        variability_factor(aspect, cfg.t_ar),
        variability_factor(volume, cfg.t_volume),
        variability_factor(speed, cfg.t_velocity),
        variability_factor(xs[:, 5], cfg.t_yaw_rate),
        cfg.weights,
    )


def combine(factors: ExistenceFactors) -> float:
    p = float(np.dot(factors.weights, factors.as_array()))
    return min(max(p, 0.0), 1.0)
