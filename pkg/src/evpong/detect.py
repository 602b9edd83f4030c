"""Event-based ball detection: five refinement stages plus an adaptive ROI.

A window of events is cleaned by a morphological opening on a local
occupancy map, grouped by density clustering, reduced to the positive
(leading-edge) events of each group, screened by convex-hull circularity
and solidity, and finally localized with an exact minimum enclosing circle.
The tracker re-centers a square ROI on every hit and resets to the full
sensor after three consecutive misses.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator

from .events import EventArray, EventBatch, Roi, clip_to_roi
from .errors import DataError


@dataclass
class DetectConfig:
    """Pipeline thresholds; defaults sized for a ball of a few hundred events
    per window (radius prior 3-40 px)."""

    kernel_radius: int = 1
    eps: float = 3.0
    min_samples: int = 5
    cluster_card_min: int = 20
    cluster_card_max: int = 4000
    centroid_dist_max: float = 60.0
    circ_min: float = 0.6
    solidity_min: float = 0.40
    radius_min: float = 3.0
    radius_max: float = 40.0
    roi_expand: int = 80

    def __post_init__(self):
        if not 0.0 < self.circ_min <= 1.0:
            raise DataError(f"circ_min {self.circ_min} outside (0, 1]")
        if not 0.0 < self.solidity_min <= 1.0:
            raise DataError(f"solidity_min {self.solidity_min} outside (0, 1]")
        if self.radius_min >= self.radius_max:
            raise DataError("radius_min must be < radius_max")
        if self.cluster_card_min >= self.cluster_card_max:
            raise DataError("cluster_card_min must be < cluster_card_max")


@dataclass
class ClusterFeatures:
    size: int
    hull_area: float
    hull_perimeter: float
    circularity: float
    pixel_area: float
    solidity: float
    centroid: tuple[float, float]


@dataclass
class BallDetection2D:
    u: float
    v: float
    r: float
    features: ClusterFeatures
    t: int  # window end, microseconds


def _disk_element(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return xx * xx + yy * yy <= r * r


def denoise(batch: EventBatch, kernel_radius: int) -> EventBatch:
    """Morphological opening on the batch's local occupancy map.

    The binary map covers only the events' bounding box (no full-frame
    reconstruction); events whose pixel survives the opening are kept with
    polarity and timestamps untouched.
    """
    ev = batch.events
    if len(ev) == 0:
        return batch
    x0, y0 = int(ev.x.min()), int(ev.y.min())
    occ = np.zeros((int(ev.y.max()) - y0 + 1, int(ev.x.max()) - x0 + 1), dtype=bool)
    occ[ev.y - y0, ev.x - x0] = True
    element = _disk_element(kernel_radius)
    opened = ndimage.binary_dilation(
        ndimage.binary_erosion(occ, element, border_value=0), element
    )
    keep = opened[ev.y - y0, ev.x - x0]
    return EventBatch(ev.select(keep), batch.t_start, batch.t_end, batch.sensor_dims)


NOISE = -1
_UNSEEN = -2


def dbscan_labels(x: np.ndarray, y: np.ndarray, eps: float, min_samples: int) -> np.ndarray:
    """Density clustering over 2D points; returns a label per point, -1 noise.

    Deterministic formulation: points are scanned in index order, seeds
    expand FIFO with index-sorted neighbor lists, and a point counts itself
    among its neighbors. Grid hashing keeps region queries near O(1).
    """
    n = len(x)
    labels = np.full(n, _UNSEEN, dtype=np.int64)
    if n == 0:
        return labels
    px = np.asarray(x, dtype=float)
    py = np.asarray(y, dtype=float)
    cx = np.floor(px / eps).astype(np.int64)
    cy = np.floor(py / eps).astype(np.int64)
    grid: dict[tuple[int, int], list[int]] = {}
    for i in range(n):
        grid.setdefault((int(cx[i]), int(cy[i])), []).append(i)
    cells = {k: np.asarray(v, dtype=np.int64) for k, v in grid.items()}
    eps2 = eps * eps

    def neighbors(i: int) -> np.ndarray:
        cands = [
            cells[key]
            for dx in (-1, 0, 1)
            for dy in (-1, 0, 1)
            if (key := (int(cx[i]) + dx, int(cy[i]) + dy)) in cells
        ]
        cand = np.concatenate(cands)
        d2 = (px[cand] - px[i]) ** 2 + (py[cand] - py[i]) ** 2
        nb = cand[d2 <= eps2]
        nb.sort()
        return nb

    visited = np.zeros(n, dtype=bool)
    cluster_id = 0
    for i in range(n):
        if visited[i]:
            continue
        visited[i] = True
        nb = neighbors(i)
        if len(nb) < min_samples:
            labels[i] = NOISE
            continue
        labels[i] = cluster_id
        queue = deque(int(j) for j in nb)
        while queue:
            j = queue.popleft()
            if labels[j] == NOISE:
                labels[j] = cluster_id  # border point claimed by first reaching cluster
            if visited[j]:
                continue
            visited[j] = True
            labels[j] = cluster_id
            nbj = neighbors(j)
            if len(nbj) >= min_samples:
                queue.extend(int(q) for q in nbj)
        cluster_id += 1
    return labels


def cluster(batch: EventBatch, cfg: DetectConfig) -> list[EventArray]:
    """DBSCAN over (x, y), outliers dropped, then the cardinality prior
    [cluster_card_min, cluster_card_max] applied."""
    ev = batch.events
    labels = dbscan_labels(ev.x, ev.y, cfg.eps, cfg.min_samples)
    out = []
    for cid in range(labels.max() + 1 if len(labels) else 0):
        idx = np.nonzero(labels == cid)[0]
        if cfg.cluster_card_min <= len(idx) <= cfg.cluster_card_max:
            out.append(ev.select(idx))
    return out


def polarity_filter(cluster_events: EventArray, centroid_dist_max: float) -> EventArray:
    """Keep the positive (leading-edge) events, then drop spatial outliers.

    One pass: the centroid is computed once over the positive set and events
    farther than the threshold are discarded without re-centering.
    """
    pos = cluster_events.select(cluster_events.p == 1)
    if len(pos) == 0:
        return pos
    cx = float(pos.x.mean())
    cy = float(pos.y.mean())
    dist = np.hypot(pos.x - cx, pos.y - cy)
    return pos.select(dist <= centroid_dist_max)


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull (CCW) of unique 2D points."""
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def half(seq):
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2:
                ax, ay = out[-1] - out[-2]
                bx, by = p - out[-2]
                if ax * by - ay * bx > 0:
                    break
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def compute_features(cluster_events: EventArray) -> ClusterFeatures | None:
    """Hull-based shape features; pixels are treated as unit squares so a
    single-pixel cluster still has measurable area.

    Returns None for a degenerate (empty) cluster.
    """
    if len(cluster_events) == 0:
        return None
    pixels = np.unique(np.column_stack([cluster_events.x, cluster_events.y]), axis=0)
    corners = np.concatenate([
        pixels + off for off in ((0, 0), (1, 0), (0, 1), (1, 1))
    ]).astype(float)
    hull = _convex_hull(corners)
    if len(hull) < 3:
        return None
    x, y = hull[:, 0], hull[:, 1]
    area = 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))
    perim = float(np.sum(np.hypot(np.diff(x, append=x[0]), np.diff(y, append=y[0]))))
    if area < 1e-9 or perim <= 0:
        return None
    circ = 4.0 * np.pi * area / (perim * perim)
    pixel_area = float(len(pixels))
    return ClusterFeatures(
        size=len(cluster_events),
        hull_area=area,
        hull_perimeter=perim,
        circularity=float(circ),
        pixel_area=pixel_area,
        solidity=pixel_area / area,
        centroid=(float(cluster_events.x.mean()), float(cluster_events.y.mean())),
    )


def geometric_verify(
    cluster_events: EventArray, cfg: DetectConfig
) -> tuple[ClusterFeatures | None, str]:
    """Screen a cluster by circularity and solidity; returns (features, reason).

    Features are None when rejected; the reason string names the failed gate.
    """
    feats = compute_features(cluster_events)
    if feats is None:
        return None, "degenerate hull"
    if feats.circularity < cfg.circ_min:
        return None, f"circularity {feats.circularity:.3f} < {cfg.circ_min}"
    if feats.solidity < cfg.solidity_min:
        return None, f"solidity {feats.solidity:.3f} < {cfg.solidity_min}"
    return feats, "ok"


def _diameter_circle(p, q) -> tuple[float, float, float]:
    cx, cy = (p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0
    r = max(np.hypot(cx - p[0], cy - p[1]), np.hypot(cx - q[0], cy - q[1]))
    return cx, cy, r


def _circumcircle(a, b, c) -> tuple[float, float, float] | None:
    ox = (min(a[0], b[0], c[0]) + max(a[0], b[0], c[0])) / 2.0
    oy = (min(a[1], b[1], c[1]) + max(a[1], b[1], c[1])) / 2.0
    ax, ay = a[0] - ox, a[1] - oy
    bx, by = b[0] - ox, b[1] - oy
    cx, cy = c[0] - ox, c[1] - oy
    d = (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by)) * 2.0
    if d == 0.0:
        return None
    x = ox + ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay)
              + (cx * cx + cy * cy) * (ay - by)) / d
    y = oy + ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx)
              + (cx * cx + cy * cy) * (bx - ax)) / d
    r = max(np.hypot(x - px, y - py) for px, py in (a, b, c))
    return x, y, r


def _in_circle(c, p) -> bool:
    return c is not None and np.hypot(p[0] - c[0], p[1] - c[1]) <= c[2] * (1 + 1e-14) + 1e-14


def _cross(ox, oy, ax, ay, bx, by) -> float:
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def _circle_two_boundary(points, p, q):
    """Smallest circle with p and q on the boundary enclosing ``points``."""
    circ = _diameter_circle(p, q)
    left = None
    right = None
    for r_pt in points:
        if _in_circle(circ, r_pt):
            continue
        cross = _cross(p[0], p[1], q[0], q[1], r_pt[0], r_pt[1])
        c = _circumcircle(p, q, r_pt)
        if c is None:
            continue
        if cross > 0.0 and (
            left is None
            or _cross(p[0], p[1], q[0], q[1], c[0], c[1])
            > _cross(p[0], p[1], q[0], q[1], left[0], left[1])
        ):
            left = c
        elif cross < 0.0 and (
            right is None
            or _cross(p[0], p[1], q[0], q[1], c[0], c[1])
            < _cross(p[0], p[1], q[0], q[1], right[0], right[1])
        ):
            right = c
    if left is None and right is None:
        return circ
    if left is None:
        return right
    if right is None:
        return left
    return left if left[2] <= right[2] else right


def _circle_one_boundary(points, p):
    c = (p[0], p[1], 0.0)
    for i, q in enumerate(points):
        if not _in_circle(c, q):
            if c[2] == 0.0:
                c = _diameter_circle(p, q)
            else:
                c = _circle_two_boundary(points[: i + 1], p, q)
    return c


def min_enclosing_circle(points: np.ndarray) -> tuple[float, float, float]:
    """Exact smallest enclosing circle (Welzl's incremental algorithm).

    The shuffle uses a fixed-seed PRNG so results are bit-stable run to run.
    """
    pts = [(float(px), float(py)) for px, py in np.unique(np.asarray(points, float), axis=0)]
    if not pts:
        raise DataError("minimum enclosing circle of an empty set")
    random.Random(0).shuffle(pts)
    c = None
    for i, p in enumerate(pts):
        if c is None or not _in_circle(c, p):
            c = _circle_one_boundary(pts[: i + 1], p)
    return c


def localize(
    cluster_events: EventArray, cfg: DetectConfig, t_us: int,
    features: ClusterFeatures | None = None,
) -> BallDetection2D | None:
    """Fit the exact minimum enclosing circle; reject radii outside the prior."""
    if features is None:
        features = compute_features(cluster_events)
    if features is None:
        return None
    coords = np.column_stack([cluster_events.x, cluster_events.y]).astype(float)
    u, v, r = min_enclosing_circle(coords)
    if not cfg.radius_min <= r <= cfg.radius_max:
        return None
    return BallDetection2D(u=u, v=v, r=r, features=features, t=int(t_us))


def detect_step(
    roi: Roi, batch: EventBatch, cfg: DetectConfig
) -> tuple[BallDetection2D | None, Roi]:
    """Run the full pipeline on one window and update the tracker ROI.

    On a hit the ROI re-centers to [u +/- roi_expand] x [v +/- roi_expand];
    after three consecutive misses it resets to the full sensor plane.
    """
    w, h = batch.sensor_dims
    clipped = clip_to_roi(batch, roi)
    cleaned = denoise(clipped, cfg.kernel_radius)
    candidates: list[BallDetection2D] = []
    for cl in cluster(cleaned, cfg):
        refined = polarity_filter(cl, cfg.centroid_dist_max)
        if len(refined) == 0:
            continue
        feats, _reason = geometric_verify(refined, cfg)
        if feats is None:
            continue
        det = localize(refined, cfg, batch.t_end, feats)
        if det is not None:
            candidates.append(det)
    if candidates:
        best = max(candidates, key=lambda d: (d.features.circularity, d.features.size))
        new_roi = Roi(
            x_min=max(0, int(np.floor(best.u)) - cfg.roi_expand),
            x_max=min(w - 1, int(np.ceil(best.u)) + cfg.roi_expand),
            y_min=max(0, int(np.floor(best.v)) - cfg.roi_expand),
            y_max=min(h - 1, int(np.ceil(best.v)) + cfg.roi_expand),
            miss_count=0,
        )
        return best, new_roi
    misses = roi.miss_count + 1
    if misses >= 3:
        return None, Roi.full_sensor(batch.sensor_dims)
    return None, Roi(roi.x_min, roi.x_max, roi.y_min, roi.y_max, miss_count=misses)


class BallDetector(BaseEstimator):
    """Streaming ball detector with the scikit-learn estimator surface.

    Stateless between calls: ``transform`` starts from a full-sensor ROI and
    carries tracker state across the windows of the one call only.
    """

    def __init__(
        self,
        kernel_radius: int = 1,
        eps: float = 3.0,
        min_samples: int = 5,
        cluster_card_min: int = 20,
        cluster_card_max: int = 4000,
        centroid_dist_max: float = 60.0,
        circ_min: float = 0.6,
        solidity_min: float = 0.40,
        radius_min: float = 3.0,
        radius_max: float = 40.0,
        roi_expand: int = 80,
    ):
        self.kernel_radius = kernel_radius
        self.eps = eps
        self.min_samples = min_samples
        self.cluster_card_min = cluster_card_min
        self.cluster_card_max = cluster_card_max
        self.centroid_dist_max = centroid_dist_max
        self.circ_min = circ_min
        self.solidity_min = solidity_min
        self.radius_min = radius_min
        self.radius_max = radius_max
        self.roi_expand = roi_expand

    def config(self) -> DetectConfig:
        return DetectConfig(**self.get_params())

    def transform(self, batches) -> list[BallDetection2D | None]:
        """Map a sequence of EventBatch windows to per-window detections."""
        cfg = self.config()
        roi = None
        out: list[BallDetection2D | None] = []
        for batch in batches:
            if roi is None:
                roi = Roi.full_sensor(batch.sensor_dims)
            det, roi = detect_step(roi, batch, cfg)
            out.append(det)
        return out
