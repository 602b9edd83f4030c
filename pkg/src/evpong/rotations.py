"""Minimal quaternion helpers, scalar-first (w, x, y, z) convention.

Only what the racket-orientation action mapping needs: axis-angle and
intrinsic x-y-z Euler construction, Hamilton product, vector rotation.
"""

from __future__ import annotations

import numpy as np


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    return q / n


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product q1 * q2 (apply q2 first when rotating vectors by q1*q2... )

    Composition convention: rotating by ``quat_multiply(a, b)`` equals
    rotating by ``b`` in the local frame of ``a``, i.e. an intrinsic step.
    """
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_from_euler_xyz(angles) -> np.ndarray:
    """Quaternion for intrinsic x-y-z Euler rotation (roll, then pitch, then yaw)."""
    ax, ay, az = angles
    qx = quat_from_axis_angle([1.0, 0.0, 0.0], ax)
    qy = quat_from_axis_angle([0.0, 1.0, 0.0], ay)
    qz = quat_from_axis_angle([0.0, 0.0, 1.0], az)
    return quat_multiply(quat_multiply(qx, qy), qz)


def quat_rotate(q: np.ndarray, v) -> np.ndarray:
    """Rotate a 3-vector by a unit quaternion."""
    w, x, y, z = q
    u = np.array([x, y, z])
    v = np.asarray(v, dtype=float)
    return v + 2.0 * np.cross(u, np.cross(u, v) + w * v)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
