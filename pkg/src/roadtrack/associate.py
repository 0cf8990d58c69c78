"""Fallback association: Euclidean cost matrix, Hungarian solve, gating.

Detections already bound to a track by the box-merge step form the block
``A_a``; this module produces ``A_b`` for the rest and composes the two.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


class AssociationConflict(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CostMatrix:
    values: np.ndarray
    det_indices: tuple[int, ...]
    track_ids: tuple[int, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(len(self.det_indices), len(self.track_ids))
        if v.size and (not np.all(np.isfinite(v)) or v.min() < 0):
            raise ValueError("costs must be finite and >= 0")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "det_indices", tuple(self.det_indices))
        object.__setattr__(self, "track_ids", tuple(self.track_ids))

    @classmethod
    def from_array(cls, values) -> CostMatrix:
        v = np.atleast_2d(np.asarray(values, dtype=float))
        return cls(v, tuple(range(v.shape[0])), tuple(range(v.shape[1])))

    def cost(self, det_index: int, track_id: int) -> float:
        return float(self.values[self.det_indices.index(det_index), self.track_ids.index(track_id)])


@dataclass(frozen=True)
class AssignmentResult:
    pairs: tuple[tuple[int, int], ...] = ()
    unmatched_detections: tuple[int, ...] = ()
    unmatched_tracks: tuple[int, ...] = ()

    def __post_init__(self):
        dets = [d for d, _ in self.pairs]
        tracks = [t for _, t in self.pairs]
        if len(set(dets)) != len(dets) or len(set(tracks)) != len(tracks):
            raise AssociationConflict("association conflict: pairs are not one-to-one")

    def as_dict(self) -> dict[int, int]:
        return dict(self.pairs)

    def matrix(self, n_detections: int, track_ids: Sequence[int]) -> np.ndarray:
        """Boolean detections x tracks view of the bindings."""
        col = {t: j for j, t in enumerate(track_ids)}
        a = np.zeros((n_detections, len(track_ids)), dtype=bool)
        for d, t in self.pairs:
            a[d, col[t]] = True
        return a


def build_cost_matrix(dets, tracks, det_indices: Sequence[int] | None = None) -> CostMatrix:
    """Pairwise center distances between detections and (predicted) tracks."""
    det_indices = tuple(range(len(dets))) if det_indices is None else tuple(det_indices)
    dc = np.array([d.box.center for d in dets], dtype=float).reshape(-1, 2)
    tc = np.array([t.state.p for t in tracks], dtype=float).reshape(-1, 2)
    values = np.linalg.norm(dc[:, None, :] - tc[None, :, :], axis=2)
    return CostMatrix(values, det_indices, tuple(t.id for t in tracks))


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost perfect matching on a square matrix.

    Shortest augmenting paths with row/column potentials, O(n^3). Returns
    ``col_of_row``.
    """
    c = np.asarray(cost, dtype=float)
    n = c.shape[0]
    if c.shape != (n, n):
        raise ValueError("hungarian() needs a square matrix")
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)  # p[j]: row (1-based) matched to column j
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = c[i0 - 1, :] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            used_idx = np.nonzero(used)[0]
            u[p[used_idx]] += delta
            v[used_idx] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row


def solve_assignment(c: CostMatrix) -> AssignmentResult:
    rows, cols = c.values.shape
    if rows == 0 or cols == 0:
        return AssignmentResult((), c.det_indices, c.track_ids)
    n = max(rows, cols)
    pad = (c.values.max() if c.values.size else 0.0) + 1.0
    square = np.full((n, n), pad)
    square[:rows, :cols] = c.values
    col_of_row = hungarian(square)
    pairs = []
    for r in range(rows):
        k = int(col_of_row[r])
        if k < cols:
            pairs.append((c.det_indices[r], c.track_ids[k]))
    matched_d = {d for d, _ in pairs}
    matched_t = {t for _, t in pairs}
    return AssignmentResult(
        tuple(pairs),
        tuple(d for d in c.det_indices if d not in matched_d),
        tuple(t for t in c.track_ids if t not in matched_t),
    )


def gate(a: AssignmentResult, c: CostMatrix, c_max: float) -> AssignmentResult:
    kept, dropped = [], []
    for d, t in a.pairs:
        (kept if c.cost(d, t) <= c_max else dropped).append((d, t))
    return AssignmentResult(
        tuple(kept),
        tuple(sorted(a.unmatched_detections + tuple(d for d, _ in dropped))),
        tuple(a.unmatched_tracks + tuple(t for _, t in dropped)),
    )


def compose_block(a_a: Mapping[int, int], a_b: AssignmentResult) -> AssignmentResult:
    """Union of merge-step bindings and Hungarian bindings.

    Raises ``AssociationConflict`` when the two blocks share a detection or
    a track.
    """
    dets_b = {d for d, _ in a_b.pairs}
    tracks_b = {t for _, t in a_b.pairs}
    for d, t in a_a.items():
        if d in dets_b or t in tracks_b:
            raise AssociationConflict(f"association conflict on detection {d} / track {t}")
    if len(set(a_a.values())) != len(a_a):
        raise AssociationConflict("association conflict: merge block is not one-to-one")
    pairs = tuple(sorted(a_a.items())) + a_b.pairs
    bound_t = set(a_a.values())
    return AssignmentResult(
        pairs,
        tuple(d for d in a_b.unmatched_detections if d not in a_a),
        tuple(t for t in a_b.unmatched_tracks if t not in bound_t),
    )
