"""Independent reference implementations used as test oracles.

Deliberately simple and slow: O(n^2) scans, exhaustive candidate
enumeration, direct matrix algebra. These never share code with the
production paths they check.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np


def brute_dbscan(points: np.ndarray, eps: float, min_samples: int) -> np.ndarray:
    """Textbook DBSCAN with O(n^2) neighbor scans.

    Same scan-order semantics as the production implementation: index-order
    seeding, FIFO expansion, index-sorted neighbor lists, points count
    themselves, distance inclusive of eps.
    """
    n = len(points)
    labels = np.full(n, -2, dtype=np.int64)
    if n == 0:
        return labels
    pts = np.asarray(points, dtype=float)

    def neighbors(i):
        d2 = ((pts - pts[i]) ** 2).sum(axis=1)
        return np.nonzero(d2 <= eps * eps)[0]

    visited = np.zeros(n, dtype=bool)
    cid = 0
    for i in range(n):
        if visited[i]:
            continue
        visited[i] = True
        nb = neighbors(i)
        if len(nb) < min_samples:
            labels[i] = -1
            continue
        labels[i] = cid
        queue = deque(int(j) for j in nb)
        while queue:
            j = queue.popleft()
            if labels[j] == -1:
                labels[j] = cid
            if visited[j]:
                continue
            visited[j] = True
            labels[j] = cid
            nbj = neighbors(j)
            if len(nbj) >= min_samples:
                queue.extend(int(q) for q in nbj)
        cid += 1
    return labels


def brute_min_enclosing_circle(points: np.ndarray) -> tuple[float, float, float]:
    """Smallest enclosing circle by exhaustive pair/triple enumeration."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    n = len(pts)
    if n == 0:
        raise ValueError("empty point set")
    if n == 1:
        return float(pts[0, 0]), float(pts[0, 1]), 0.0

    def contains(cx, cy, r):
        return bool(np.all(np.hypot(pts[:, 0] - cx, pts[:, 1] - cy) <= r * (1 + 1e-12) + 1e-12))

    best = None
    for i in range(n):
        for j in range(i + 1, n):
            cx = (pts[i, 0] + pts[j, 0]) / 2
            cy = (pts[i, 1] + pts[j, 1]) / 2
            r = max(math.hypot(cx - pts[i, 0], cy - pts[i, 1]),
                    math.hypot(cx - pts[j, 0], cy - pts[j, 1]))
            if contains(cx, cy, r) and (best is None or r < best[2]):
                best = (cx, cy, r)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                ax, ay = pts[i]
                bx, by = pts[j]
                cx_, cy_ = pts[k]
                d = 2.0 * (ax * (by - cy_) + bx * (cy_ - ay) + cx_ * (ay - by))
                if d == 0.0:
                    continue
                ux = ((ax**2 + ay**2) * (by - cy_) + (bx**2 + by**2) * (cy_ - ay)
                      + (cx_**2 + cy_**2) * (ay - by)) / d
                uy = ((ax**2 + ay**2) * (cx_ - bx) + (bx**2 + by**2) * (ax - cx_)
                      + (cx_**2 + cy_**2) * (bx - ax)) / d
                r = max(math.hypot(ux - px, uy - py) for px, py in (pts[i], pts[j], pts[k]))
                if contains(ux, uy, r) and (best is None or r < best[2]):
                    best = (ux, uy, r)
    return best


def reference_opening(occupancy: np.ndarray, radius: int) -> np.ndarray:
    """Erosion then dilation with a discrete disk, by explicit shifting.

    Outside the map counts as background for the erosion.
    """
    offsets = [
        (dy, dx)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if dx * dx + dy * dy <= radius * radius
    ]
    h, w = occupancy.shape

    def shifted(img, dy, dx, fill):
        out = np.full_like(img, fill)
        ys = slice(max(0, -dy), min(h, h - dy))
        xs = slice(max(0, -dx), min(w, w - dx))
        ys_src = slice(max(0, dy), min(h, h + dy))
        xs_src = slice(max(0, dx), min(w, w + dx))
        out[ys, xs] = img[ys_src, xs_src]
        return out

    eroded = np.ones_like(occupancy)
    for dy, dx in offsets:
        eroded &= shifted(occupancy, dy, dx, False)
    dilated = np.zeros_like(occupancy)
    for dy, dx in offsets:
        dilated |= shifted(eroded, -dy, -dx, False)
    return dilated


def rotation_matrix_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rotation_matrix_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def rotation_matrix_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


def intrinsic_xyz_matrix(angles) -> np.ndarray:
    """Reference rotation matrix for intrinsic x-y-z Euler composition."""
    ax, ay, az = angles
    return rotation_matrix_x(ax) @ rotation_matrix_y(ay) @ rotation_matrix_z(az)


def matrix_from_quaternion(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
