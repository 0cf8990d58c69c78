"""Cluster the object cloud, merge fragments by predicted track boxes, fit boxes.

Box fitting is multi-model: L-shape search over yaw (closeness or variance
criterion) for vehicles, minimal enclosing circle for small or pedestrian
clusters.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import ConvexHull, QhullError, cKDTree

from roadtrack.model import BoundingBox, ModelError, ObjectTrack, PointCloud, normalize_angle

log = logging.getLogger(__name__)

SIGMA_FLOOR = 0.05
CYLINDER_MIN_DIAMETER = 0.1
CLOSENESS_D0 = 0.01


@dataclass(frozen=True, eq=False)
class Cluster:
    points: np.ndarray
    stamp: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, :2]

    @property
    def centroid(self) -> np.ndarray:
        return self.points[:, :2].mean(axis=0)


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    dim_sigma: tuple[float, float, float]
    fit_kind: str
    cluster_size: int
    associated_track: int | None = None
    low_confidence: bool = False

    def __post_init__(self):
        if self.fit_kind not in ("lshape", "cylinder"):
            raise ModelError(f"unknown fit kind {self.fit_kind!r}")
        if not all(s > 0 for s in self.dim_sigma):
            raise ModelError("dimension sigmas must be > 0")


@dataclass(frozen=True)
class DetectConfig:
    cluster_tolerance: float = 0.7
    min_cluster_size: int = 10
    d_min: float = 1.2
    delta_theta: float = math.radians(10.0)
    angle_step: float = math.radians(1.0)
    leaf: float = 0.1
    criterion: str = "closeness"

    def __post_init__(self):
        if min(self.cluster_tolerance, self.min_cluster_size, self.d_min, self.delta_theta, self.angle_step, self.leaf) <= 0:
            raise ModelError("detection parameters must be positive")
        if self.criterion not in ("closeness", "variance"):
            raise ModelError(f"unknown L-shape criterion {self.criterion!r}")


# -- clustering ---------------------------------------------------------------


def cluster_labels(xyz: np.ndarray, tolerance: float) -> np.ndarray:
    """Single-linkage component label per point (hops of at most ``tolerance``)."""
    n = xyz.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int)
    pairs = cKDTree(xyz).query_pairs(tolerance, output_type="ndarray")
    graph = coo_matrix((np.ones(pairs.shape[0]), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return labels


def cluster_euclidean(cloud: PointCloud, tolerance: float, min_size: int) -> list[Cluster]:
    labels = cluster_labels(cloud.xyz, tolerance)
    if labels.size == 0:
        return []
    order = np.argsort(labels, kind="stable")
    bounds = np.flatnonzero(np.diff(labels[order])) + 1
    clusters = []
    for idx in np.split(order, bounds):
        if idx.size >= min_size:
            clusters.append(Cluster(cloud.xyz[idx], cloud.stamp))
    return clusters


# -- merge by predicted boxes ---------------------------------------------------


@dataclass(frozen=True)
class MergeResult:
    clusters: list[Cluster]
    mapping: dict[int, int]
    ambiguous: int = 0


def merge_clusters_by_box(clusters: Sequence[Cluster], predicted: Sequence[ObjectTrack], leaf: float = 0.1) -> MergeResult:
    """Fuse all clusters falling in the same predicted track box.

    A cluster belongs to a box when its centroid or any of its points lies in
    the footprint dilated by ``leaf``; a cluster touching several boxes goes
    to the nearest box center. Returns the new cluster list and a map from
    new cluster index to track id.
    """
    if not predicted:
        return MergeResult(list(clusters), {})
    boxes = [t.box for t in predicted]
    owner: list[int | None] = []
    ambiguous = 0
    for cl in clusters:
        c = cl.centroid
        hits = [
            k
            for k, b in enumerate(boxes)
            if b.contains_xy(c[None, :], leaf)[0] or b.contains_xy(cl.xy, leaf).any()
        ]
        if not hits:
            owner.append(None)
            continue
        if len(hits) > 1:
            ambiguous += 1
            hits.sort(key=lambda k: float(np.hypot(*(np.asarray(boxes[k].center) - c))))
        owner.append(hits[0])
    merged: list[Cluster] = []
    mapping: dict[int, int] = {}
    slot: dict[int, int] = {}
    for cl, k in zip(clusters, owner):
        if k is None:
            merged.append(cl)
            continue
        if k in slot:
            i = slot[k]
            merged[i] = Cluster(np.vstack([merged[i].points, cl.points]), cl.stamp)
        else:
            slot[k] = len(merged)
            mapping[len(merged)] = predicted[k].id
            merged.append(cl)
    if ambiguous:
        log.debug("%d clusters touched more than one predicted box", ambiguous)
    return MergeResult(merged, mapping, ambiguous)


# -- L-shape ----------------------------------------------------------------------


def _closeness_scores(c1: np.ndarray, c2: np.ndarray) -> np.ndarray:
    d1 = np.minimum(c1.max(axis=1, keepdims=True) - c1, c1 - c1.min(axis=1, keepdims=True))
    d2 = np.minimum(c2.max(axis=1, keepdims=True) - c2, c2 - c2.min(axis=1, keepdims=True))
    d = np.maximum(np.minimum(d1, d2), CLOSENESS_D0)
    return (1.0 / d).sum(axis=1)


def _variance_scores(c1: np.ndarray, c2: np.ndarray) -> np.ndarray:
    d1 = np.minimum(c1.max(axis=1, keepdims=True) - c1, c1 - c1.min(axis=1, keepdims=True))
    d2 = np.minimum(c2.max(axis=1, keepdims=True) - c2, c2 - c2.min(axis=1, keepdims=True))
    near1 = d1 < d2
    scores = np.empty(c1.shape[0])
    for k in range(c1.shape[0]):
        e1, e2 = d1[k][near1[k]], d2[k][~near1[k]]
        v1 = e1.var() if e1.size else 0.0
        v2 = e2.var() if e2.size else 0.0
        scores[k] = -(v1 + v2)
    return scores


def _edge_support(along: np.ndarray, across: np.ndarray, lo: float, hi: float, side: float, leaf: float) -> float:
    """Fraction of a rectangle side lying within ``leaf`` of some point."""
    length = hi - lo
    gap = np.abs(across - side)
    near = gap <= leaf
    if not near.any():
        return 0.0
    if length <= 0:
        return 1.0
    half = np.sqrt(leaf**2 - gap[near] ** 2)
    starts = np.clip(along[near] - half, lo, hi)
    ends = np.clip(along[near] + half, lo, hi)
    order = np.argsort(starts)
    covered, cur_s, cur_e = 0.0, starts[order[0]], ends[order[0]]
    for a, b in zip(starts[order[1:]], ends[order[1:]]):
        if a > cur_e:
            covered += cur_e - cur_s
            cur_s, cur_e = a, b
        else:
            cur_e = max(cur_e, b)
    covered += cur_e - cur_s
    return min(covered / length, 1.0)


def _dim_sigma(dim: float, support: float, leaf: float) -> float:
    return max(SIGMA_FLOOR, leaf + (1.0 - support) * dim)


def fit_lshape(
    cluster: Cluster,
    theta_hint: float | None = None,
    delta_theta: float = math.radians(10.0),
    angle_step: float = math.radians(1.0),
    leaf: float = 0.1,
    criterion: str = "closeness",
) -> Detection:
    pts = cluster.points
    if pts.shape[0] < 3:
        raise ModelError("L-shape fitting needs at least 3 points")
    xy = pts[:, :2] - pts[:, :2].mean(axis=0)
    if theta_hint is None:
        thetas = np.arange(0.0, math.pi / 2 - 1e-12, angle_step)
    else:
        k = int(math.floor(delta_theta / angle_step + 1e-9))
        thetas = theta_hint + angle_step * np.arange(-k, k + 1)
    cos, sin = np.cos(thetas)[:, None], np.sin(thetas)[:, None]
    c1 = cos * xy[None, :, 0] + sin * xy[None, :, 1]
    c2 = -sin * xy[None, :, 0] + cos * xy[None, :, 1]
    scores = _variance_scores(c1, c2) if criterion == "variance" else _closeness_scores(c1, c2)
    # ties resolve toward the hint / the lowest yaw
    if theta_hint is not None:
        best = int(np.lexsort((np.abs(thetas - theta_hint), -scores))[0])
    else:
        best = int(np.argmax(scores))
    theta = float(thetas[best])
    a, b = c1[best], c2[best]
    lo1, hi1, lo2, hi2 = a.min(), a.max(), b.min(), b.max()
    length, width = hi1 - lo1, hi2 - lo2
    low_conf = False
    sup_l = max(_edge_support(a, b, lo1, hi1, lo2, leaf), _edge_support(a, b, lo1, hi1, hi2, leaf))
    sup_w = max(_edge_support(b, a, lo2, hi2, lo1, leaf), _edge_support(b, a, lo2, hi2, hi1, leaf))
    sigma_l, sigma_w = _dim_sigma(length, sup_l, leaf), _dim_sigma(width, sup_w, leaf)
    if width < leaf / 2:
        # collinear cluster: a line segment, width unobservable
        low_conf = True
        width = leaf
        sigma_w = max(1.0, length)
    if length < leaf / 2:
        low_conf = True
        length = leaf
        sigma_l = max(1.0, width)
    mid1, mid2 = (lo1 + hi1) / 2, (lo2 + hi2) / 2
    c, s = math.cos(theta), math.sin(theta)
    center = pts[:, :2].mean(axis=0) + np.array([c * mid1 - s * mid2, s * mid1 + c * mid2])
    if theta_hint is None and width > length:
        length, width = width, length
        sigma_l, sigma_w = sigma_w, sigma_l
        theta += math.pi / 2
    height = max(float(pts[:, 2].max()), leaf)
    return Detection(
        BoundingBox(tuple(center), theta, (length, width, height)),
        (sigma_l, sigma_w, max(SIGMA_FLOOR, leaf)),
        "lshape",
        pts.shape[0],
        low_confidence=low_conf,
    )


# -- cylinder -----------------------------------------------------------------------


def _circle_two(a, b):
    c = (a + b) / 2.0
    return c, float(np.hypot(*(a - c)))


def _circle_three(a, b, c):
    ax, ay = a
    bx, by = b
    cx, cy = c
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if abs(d) < 1e-14:
        return None
    ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / d
    uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / d
    center = np.array([ux, uy])
    return center, float(np.hypot(*(a - center)))


def _inside(circle, p, eps=1e-9) -> bool:
    return circle is not None and float(np.hypot(*(p - circle[0]))) <= circle[1] + eps


def minimal_enclosing_circle(xy: np.ndarray) -> tuple[np.ndarray, float]:
    """Smallest circle containing all points (iterative Welzl on the hull)."""
    pts = np.asarray(xy, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ModelError("empty point set")
    if pts.shape[0] > 3:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            # collinear or duplicate points: the extreme pair spans the circle
            d = pts - pts.mean(axis=0)
            _, _, vt = np.linalg.svd(d, full_matrices=False)
            t = d @ vt[0]
            return _circle_two(pts[np.argmin(t)], pts[np.argmax(t)])
    pts = np.unique(pts, axis=0)
    circle = (pts[0], 0.0)
    for i in range(1, pts.shape[0]):
        if _inside(circle, pts[i]):
            continue
        circle = (pts[i], 0.0)
        for j in range(i):
            if _inside(circle, pts[j]):
                continue
            circle = _circle_two(pts[i], pts[j])
            for k in range(j):
                if _inside(circle, pts[k]):
                    continue
                cand = _circle_three(pts[i], pts[j], pts[k])
                if cand is None:
                    # collinear triple: widest pair
                    trio = (pts[i], pts[j], pts[k])
                    cand = max(
                        (_circle_two(trio[p], trio[q]) for p, q in ((0, 1), (0, 2), (1, 2))),
                        key=lambda cr: cr[1],
                    )
                circle = cand
    return np.asarray(circle[0], dtype=float), float(circle[1])


def fit_cylinder(cluster: Cluster, leaf: float = 0.1) -> Detection:
    pts = cluster.points
    if pts.shape[0] == 0:
        raise ModelError("cylinder fitting needs a nonempty cluster")
    center, radius = minimal_enclosing_circle(pts[:, :2])
    diameter = max(2.0 * radius, CYLINDER_MIN_DIAMETER)
    sigma = max(SIGMA_FLOOR, leaf + 0.25 * diameter)
    height = max(float(pts[:, 2].max()), leaf)
    return Detection(
        BoundingBox(tuple(center), 0.0, (diameter, diameter, height)),
        (sigma, sigma, max(SIGMA_FLOOR, leaf)),
        "cylinder",
        pts.shape[0],
    )


# -- full detection step ---------------------------------------------------------


def equivalent_diameter(cluster: Cluster) -> float:
    """Diameter of the circle whose area equals the axis-aligned XY footprint."""
    ext = cluster.xy.max(axis=0) - cluster.xy.min(axis=0)
    return math.sqrt(4.0 * float(ext[0] * ext[1]) / math.pi)


def fit_cluster(cluster: Cluster, track: ObjectTrack | None, cfg: DetectConfig) -> Detection:
    pedestrian = track is not None and track.cls.argmax == "pedestrian"
    if pedestrian or len(cluster) < 3 or equivalent_diameter(cluster) < cfg.d_min:
        return fit_cylinder(cluster, cfg.leaf)
    hint = track.state.theta if track is not None else None
    return fit_lshape(cluster, hint, cfg.delta_theta, cfg.angle_step, cfg.leaf, cfg.criterion)


@dataclass(frozen=True)
class DetectionResult:
    detections: list[Detection]
    bound: dict[int, int] = field(default_factory=dict)
    n_clusters: int = 0
    ambiguous: int = 0


def detect_objects(cloud: PointCloud, predicted: Sequence[ObjectTrack], cfg: DetectConfig) -> DetectionResult:
    clusters = cluster_euclidean(cloud, cfg.cluster_tolerance, cfg.min_cluster_size)
    merged = merge_clusters_by_box(clusters, predicted, cfg.leaf)
    by_id = {t.id: t for t in predicted}
    dets = []
    for i, cl in enumerate(merged.clusters):
        tid = merged.mapping.get(i)
        det = fit_cluster(cl, by_id.get(tid), cfg)
        if tid is not None:
            det = Detection(det.box, det.dim_sigma, det.fit_kind, det.cluster_size, tid, det.low_confidence)
        dets.append(det)
    return DetectionResult(dets, dict(merged.mapping), len(clusters), merged.ambiguous)
