"""Compare exported object lists with ground truth.

Per frame, tracks and visible ground-truth actors are matched by the
Hungarian solver on center distance, gated at ``c_max``. Errors are
accumulated over matched pairs (orientation only for box fits, since a
cylinder carries no heading); detection, false-positive and identity
metrics follow CLEAR-MOT conventions.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from roadtrack.associate import CostMatrix, gate, solve_assignment
from roadtrack.model import normalize_angle

LATENCY_BINS_MS = (0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100, math.inf)
EXISTENCE_BINS = tuple(np.linspace(0.0, 1.0, 11))


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class EvalReport:
    n_frames: int
    n_truth: int
    n_matched: int
    rmse_forward: float
    rmse_lateral: float
    rmse_position: float
    rmse_orientation_deg: float
    rmse_dims: tuple[float, float, float]
    rmse_dim: float
    detection_rate: float
    missed_actors: tuple[str, ...]
    false_positive_ids: tuple[int, ...]
    id_switches: int
    ids_per_actor: dict[str, tuple[int, ...]]
    class_accuracy: float
    class_accuracy_by_actor: dict[str, float]
    existence_true: tuple[int, ...]
    existence_false: tuple[int, ...]
    mean_existence: dict[int, float]
    latency_histogram: tuple[int, ...]
    deadline_fraction: float
    fallback_share: float
    true_ids: tuple[int, ...] = field(default=())

    @property
    def false_positives(self) -> int:
        return len(self.false_positive_ids)

    def existence_gap(self) -> float:
        """Smallest true-track mean p_e minus largest false-track mean p_e."""
        true = [self.mean_existence[i] for i in self.true_ids if i in self.mean_existence]
        false = [self.mean_existence[i] for i in self.false_positive_ids if i in self.mean_existence]
        if not true or not false:
            return math.nan
        return min(true) - max(false)

    def metrics(self) -> dict[str, float]:
        """Flat scalar metrics, e.g. for CSV export."""
        return {
            "frames": self.n_frames,
            "truth_samples": self.n_truth,
            "matched_samples": self.n_matched,
            "rmse_forward_m": self.rmse_forward,
            "rmse_lateral_m": self.rmse_lateral,
            "rmse_position_m": self.rmse_position,
            "rmse_orientation_deg": self.rmse_orientation_deg,
            "rmse_length_m": self.rmse_dims[0],
            "rmse_width_m": self.rmse_dims[1],
            "rmse_height_m": self.rmse_dims[2],
            "rmse_dimension_m": self.rmse_dim,
            "detection_rate": self.detection_rate,
            "missed_actors": len(self.missed_actors),
            "false_positives": self.false_positives,
            "id_switches": self.id_switches,
            "class_accuracy": self.class_accuracy,
            "deadline_fraction": self.deadline_fraction,
            "fallback_share": self.fallback_share,
        }


def _rmse(v) -> float:
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(np.mean(v**2))) if v.size else math.nan


def box_angle_error(yaw: float, truth: float) -> float:
    """Orientation error of a box, whose yaw is only defined modulo pi."""
    e = normalize_angle(yaw - truth)
    if e > math.pi / 2:
        e -= math.pi
    elif e <= -math.pi / 2:
        e += math.pi
    return e


def latency_histogram(totals_ms: Sequence[float], bins=LATENCY_BINS_MS) -> tuple[int, ...]:
    counts, _ = np.histogram(np.asarray(totals_ms, dtype=float), bins=np.asarray(bins, dtype=float))
    return tuple(int(c) for c in counts)


def evaluate(
    results,
    truth,
    c_max: float = 2.5,
    period: float = 0.1,
    min_points: int = 10,
    warmup: int = 5,
    deadline_ms: float = 100.0,
) -> EvalReport:
    """``results``: FrameResult sequence; ``truth``: sequence of
    ``(stamp, [GroundTruth, ...])`` pairs."""
    results = list(results)
    truth = sorted(((float(s), tuple(g)) for s, g in truth), key=lambda p: p[0])
    if not results or not truth:
        raise EvaluationError("nothing to evaluate")
    t_stamps = np.array([s for s, _ in truth])
    if results[-1].stamp < t_stamps[0] - period / 2 or results[0].stamp > t_stamps[-1] + period / 2:
        raise EvaluationError("results and ground truth do not overlap in time")

    err_fwd, err_lat, err_yaw, err_dim = [], [], [], []
    n_truth = n_matched = 0
    seen_visible: dict[str, int] = defaultdict(int)
    actor_ids: dict[str, list[int]] = defaultdict(list)
    last_id: dict[str, int] = {}
    switches = 0
    matched_ids: set[int] = set()
    all_ids: set[int] = set()
    class_hits: dict[str, list[bool]] = defaultdict(list)
    dynamic_actor: dict[str, bool] = {}
    pe_by_id: dict[int, list[float]] = defaultdict(list)

    for res in results:
        for t in res.tracks:
            all_ids.add(t.id)
            pe_by_id[t.id].append(t.existence)
        k = int(np.argmin(np.abs(t_stamps - res.stamp)))
        if abs(t_stamps[k] - res.stamp) > period / 2:
            continue
        gts = [g for g in truth[k][1] if g.n_points >= min_points]
        for g in truth[k][1]:
            dynamic_actor.setdefault(g.name, g.dynamic)
        if not gts:
            continue
        n_truth += len(gts)
        tracks = list(res.tracks)
        if tracks:
            gc = np.array([[g.x, g.y] for g in gts])
            tc = np.array([[t.x, t.y] for t in tracks])
            cm = CostMatrix(
                np.linalg.norm(gc[:, None] - tc[None], axis=2), tuple(range(len(gts))), tuple(range(len(tracks)))
            )
            pairs = gate(solve_assignment(cm), cm, c_max).pairs
        else:
            pairs = ()
        match = dict(pairs)
        for gi, g in enumerate(gts):
            idx = seen_visible[g.name]
            seen_visible[g.name] += 1
            if gi not in match:
                continue
            t = tracks[match[gi]]
            n_matched += 1
            matched_ids.add(t.id)
            if t.id not in actor_ids[g.name]:
                actor_ids[g.name].append(t.id)
            if g.name in last_id and last_id[g.name] != t.id:
                switches += 1
            last_id[g.name] = t.id
            err_fwd.append(t.x - g.x)
            err_lat.append(t.y - g.y)
            if t.fit_kind != "cylinder":
                err_yaw.append(box_angle_error(t.yaw, g.yaw))
            err_dim.append(np.subtract(t.dims, g.dims))
            if idx >= warmup:
                class_hits[g.name].append(t.label == g.label)

    dims = np.array(err_dim, dtype=float).reshape(-1, 3)
    missed = tuple(sorted(n for n, dyn in dynamic_actor.items() if dyn and seen_visible.get(n) and not actor_ids.get(n)))
    fp = tuple(sorted(all_ids - matched_ids))
    hits = [h for v in class_hits.values() for h in v]
    mean_pe = {i: float(np.mean(v)) for i, v in pe_by_id.items()}
    true_samples = [p for i in matched_ids for p in pe_by_id[i]]
    false_samples = [p for i in fp for p in pe_by_id[i]]
    ex_bins = np.asarray(EXISTENCE_BINS)
    totals = [r.total_ms for r in results]
    merged = sum(r.merged_pairs for r in results)
    fallback = sum(r.fallback_pairs for r in results)
    return EvalReport(
        n_frames=len(results),
        n_truth=n_truth,
        n_matched=n_matched,
        rmse_forward=_rmse(err_fwd),
        rmse_lateral=_rmse(err_lat),
        rmse_position=_rmse(np.hypot(err_fwd, err_lat)) if err_fwd else math.nan,
        rmse_orientation_deg=math.degrees(_rmse(err_yaw)) if err_yaw else math.nan,
        rmse_dims=tuple(_rmse(dims[:, a]) for a in range(3)),
        rmse_dim=_rmse(dims),
        detection_rate=n_matched / n_truth if n_truth else math.nan,
        missed_actors=missed,
        false_positive_ids=fp,
        id_switches=switches,
        ids_per_actor={k: tuple(v) for k, v in actor_ids.items()},
        class_accuracy=float(np.mean(hits)) if hits else math.nan,
        class_accuracy_by_actor={k: float(np.mean(v)) for k, v in class_hits.items() if v},
        existence_true=tuple(int(c) for c in np.histogram(true_samples, ex_bins)[0]),
        existence_false=tuple(int(c) for c in np.histogram(false_samples, ex_bins)[0]),
        mean_existence=mean_pe,
        latency_histogram=latency_histogram(totals),
        deadline_fraction=float(np.mean(np.asarray(totals) < deadline_ms)),
        fallback_share=fallback / (merged + fallback) if merged + fallback else 0.0,
        true_ids=tuple(sorted(matched_ids)),
    )
