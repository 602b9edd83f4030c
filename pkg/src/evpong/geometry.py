"""Stereo geometry and ballistic trajectory prediction.

Per-camera detections become world-frame rays, rays are intersected in a
least-squares sense (midpoint of the common perpendicular), and a short
run of 3D observations is fitted to the gravity-only flight model to
predict the ball state at the hitting plane. Two-stage prediction refits
after the table bounce so no fit window straddles the velocity jump.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .ballistics import GRAVITY
from .errors import (
    ConfigError,
    DataError,
    DegenerateGeometryError,
    InsufficientDataError,
    NoInterceptError,
)

US = 1e-6  # microseconds -> seconds


@dataclass
class CameraModel:
    """Pinhole camera: optical center, world-from-camera rotation, intrinsics.

    The camera looks along its +z axis; image u grows along camera x,
    image v along camera y. No lens distortion.
    """

    center: np.ndarray
    rotation: np.ndarray  # 3x3, world-from-camera, det +1
    focal_px: float
    principal: tuple[float, float]
    sensor_dims: tuple[int, int]

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.rotation = np.asarray(self.rotation, dtype=float)
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > 1e-9:
            raise ConfigError(f"camera rotation not orthonormal (|R'R - I| = {err:.2e})")
        if np.linalg.det(self.rotation) < 0:
            raise ConfigError("camera rotation is a reflection (det < 0)")

    def project(self, point_world) -> tuple[float, float, float]:
        """Project a world point; returns (u, v, depth). Depth <= 0 means behind."""
        pc = self.rotation.T @ (np.asarray(point_world, dtype=float) - self.center)
        if pc[2] <= 0:
            return np.nan, np.nan, pc[2]
        u = self.focal_px * pc[0] / pc[2] + self.principal[0]
        v = self.focal_px * pc[1] / pc[2] + self.principal[1]
        return float(u), float(v), float(pc[2])

    def radius_px(self, point_world, radius_m: float) -> float:
        depth = float((self.rotation.T @ (np.asarray(point_world) - self.center))[2])
        if depth <= 0:
            return np.nan
        return self.focal_px * radius_m / depth

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "rotation": self.rotation.tolist(),
            "focal_px": self.focal_px,
            "principal": list(self.principal),
            "sensor_dims": list(self.sensor_dims),
        }

    @staticmethod
    def from_dict(d: dict) -> "CameraModel":
        return CameraModel(
            center=np.array(d["center"], dtype=float),
            rotation=np.array(d["rotation"], dtype=float),
            focal_px=float(d["focal_px"]),
            principal=(float(d["principal"][0]), float(d["principal"][1])),
            sensor_dims=(int(d["sensor_dims"][0]), int(d["sensor_dims"][1])),
        )


def look_at_camera(
    center, target, focal_px: float, sensor_dims: tuple[int, int]
) -> CameraModel:
    """Build a camera at ``center`` whose optical axis points at ``target``.

    Image u is aligned with world-horizontal, v points downward in world z.
    """
    center = np.asarray(center, dtype=float)
    fwd = np.asarray(target, dtype=float) - center
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(fwd, -up)
    nr = np.linalg.norm(right)
    if nr < 1e-9:
        raise ConfigError("camera axis parallel to world z; pick another target")
    right /= nr
    down = np.cross(fwd, right)
    rot = np.column_stack([right, down, fwd])
    w, h = sensor_dims
    return CameraModel(center, rot, focal_px, ((w - 1) / 2.0, (h - 1) / 2.0), sensor_dims)


@dataclass
class StereoRig:
    left: CameraModel
    right: CameraModel

    def to_dict(self) -> dict:
        return {"left": self.left.to_dict(), "right": self.right.to_dict()}

    @staticmethod
    def from_dict(d: dict) -> "StereoRig":
        return StereoRig(CameraModel.from_dict(d["left"]), CameraModel.from_dict(d["right"]))


def standard_rig(sensor_dims: tuple[int, int] = (1280, 720), focal_px: float = 850.0) -> StereoRig:
    """Side-mounted stereo pair watching the robot-side half of the flight.

    Both cameras aim at the middle of the approach corridor so their common
    field of view covers the bounce and the run-up to the hitting plane.
    """
    aim = np.array([0.55, 0.0, 0.22])
    left = look_at_camera([0.20, -1.55, 0.90], aim, focal_px, sensor_dims)
    right = look_at_camera([0.90, -1.55, 0.90], aim, focal_px, sensor_dims)
    return StereoRig(left, right)


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray  # unit

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.direction = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(self.direction)
        if abs(n - 1.0) > 1e-12:
            self.direction = self.direction / n


@dataclass
class BallObservation3D:
    t: int  # microseconds
    position: np.ndarray
    residual: float  # ray gap at closest approach, meters

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        if self.residual < 0:
            raise DataError("negative triangulation residual")


@dataclass
class HitState:
    """Predicted ball state at the hitting plane."""

    t_c: float  # seconds
    p_c: np.ndarray
    v_c: np.ndarray
    stage: str  # "pre-bounce" | "post-bounce"

    def __post_init__(self):
        self.p_c = np.asarray(self.p_c, dtype=float)
        self.v_c = np.asarray(self.v_c, dtype=float)


def pixel_to_ray(camera: CameraModel, u: float, v: float) -> Ray:
    """World-frame viewing ray through pixel (u, v)."""
    d_cam = np.array([
        (u - camera.principal[0]) / camera.focal_px,
        (v - camera.principal[1]) / camera.focal_px,
        1.0,
    ])
    d_world = camera.rotation @ d_cam
    return Ray(camera.center, d_world / np.linalg.norm(d_world))


def triangulate(ray_l: Ray, ray_r: Ray, t: int = 0) -> BallObservation3D:
    """Least-squares two-ray intersection: midpoint of the common perpendicular.

    Raises DegenerateGeometryError for (near-)parallel rays.
    """
    d1, d2 = ray_l.direction, ray_r.direction
    b = float(d1 @ d2)
    denom = 1.0 - b * b
    if abs(b) >= 1.0 - 1e-9 or denom <= 0.0:
        raise DegenerateGeometryError("rays are (near-)parallel")
    w0 = ray_l.origin - ray_r.origin
    d = float(d1 @ w0)
    e = float(d2 @ w0)
    s = (b * e - d) / denom
    u = (e - b * d) / denom
    p1 = ray_l.origin + s * d1
    p2 = ray_r.origin + u * d2
    mid = 0.5 * (p1 + p2)
    return BallObservation3D(t=t, position=mid, residual=float(np.linalg.norm(p1 - p2)))


@dataclass
class BallisticParams:
    """Gravity-only flight parameters anchored at ``t_ref`` (microseconds)."""

    t_ref: int
    p0: np.ndarray
    v0: np.ndarray
    stage: str = "pre-bounce"

    def state_at(self, t_us) -> tuple[np.ndarray, np.ndarray]:
        tau = (np.asarray(t_us, dtype=float) - self.t_ref) * US
        acc = np.array([0.0, 0.0, -GRAVITY])
        pos = self.p0 + self.v0 * tau[..., None] + 0.5 * acc * tau[..., None] ** 2
        vel = self.v0 + acc * tau[..., None]
        return pos, vel


def fit_trajectory(obs: list[BallObservation3D], stage: str = "pre-bounce") -> BallisticParams:
    """Least-squares ballistic fit: x, y linear in t, z parabolic with g fixed.

    Requires at least five observations with strictly increasing timestamps,
    all on the same side of any bounce.
    """
    if len(obs) < 5:
        raise InsufficientDataError(f"need >= 5 observations, got {len(obs)}")
    t = np.array([o.t for o in obs], dtype=np.int64)
    if np.any(np.diff(t) <= 0):
        raise DataError("observation timestamps must be strictly increasing")
    pos = np.stack([o.position for o in obs])
    t_ref = int(t[0])
    tau = (t - t_ref).astype(float) * US
    a = np.column_stack([np.ones_like(tau), tau])
    coef_x, *_ = np.linalg.lstsq(a, pos[:, 0], rcond=None)
    coef_y, *_ = np.linalg.lstsq(a, pos[:, 1], rcond=None)
    z_adj = pos[:, 2] + 0.5 * GRAVITY * tau**2
    coef_z, *_ = np.linalg.lstsq(a, z_adj, rcond=None)
    p0 = np.array([coef_x[0], coef_y[0], coef_z[0]])
    v0 = np.array([coef_x[1], coef_y[1], coef_z[1]])
    return BallisticParams(t_ref=t_ref, p0=p0, v0=v0, stage=stage)


def predict_hit(params: BallisticParams, hitting_plane_x: float) -> HitState:
    """Solve for the hitting-plane crossing and evaluate the state there."""
    vx = float(params.v0[0])
    dx = hitting_plane_x - float(params.p0[0])
    if vx == 0.0 or dx / vx <= 0.0:
        raise NoInterceptError(
            f"trajectory (vx={vx:.3f}) never reaches plane x={hitting_plane_x}"
        )
    tau_c = dx / vx
    acc = np.array([0.0, 0.0, -GRAVITY])
    p_c = params.p0 + params.v0 * tau_c + 0.5 * acc * tau_c**2
    v_c = params.v0 + acc * tau_c
    p_c[0] = hitting_plane_x  # exact by construction
    return HitState(t_c=params.t_ref * US + tau_c, p_c=p_c, v_c=v_c, stage=params.stage)


def detect_bounce(
    obs: list[BallObservation3D], table_z: float = 0.0, height_band: float = 0.05
) -> int | None:
    """Time (us) of a table bounce, or None.

    A bounce is a sign flip of the vertical velocity, estimated over sliding
    3-sample windows, occurring while the ball is within ``height_band`` of
    the table surface. Sign flips higher up (apexes are the opposite flip;
    spurious noise) are ignored.
    """
    n = len(obs)
    if n < 4:
        return None
    t = np.array([o.t for o in obs], dtype=float)
    z = np.array([o.position[2] for o in obs], dtype=float)
    if np.any(np.diff(t) <= 0):
        raise DataError("observation timestamps must be strictly increasing")
    # slope of z over each window of 3 consecutive samples, centered at j
    slopes = np.empty(n - 2)
    for j in range(1, n - 1):
        tt = t[j - 1 : j + 2] * US
        zz = z[j - 1 : j + 2]
        tt = tt - tt[0]
        slopes[j - 1] = np.polyfit(tt, zz, 1)[0]
    for j in range(len(slopes) - 1):
        if slopes[j] < 0.0 <= slopes[j + 1]:
            lo, hi = j, min(j + 3, n - 1)
            k = lo + int(np.argmin(z[lo : hi + 1]))
            if z[k] <= table_z + height_band:
                return int(t[k])
    return None


def two_stage_hit_state(
    obs: list[BallObservation3D],
    hitting_plane_x: float,
    window: int = 5,
    table_z: float = 0.0,
) -> HitState:
    """Predict the hit state, refitting on post-bounce observations if a
    bounce is visible; fit windows never straddle the bounce."""
    t_bounce = detect_bounce(obs, table_z=table_z)
    if t_bounce is not None:
        post = [o for o in obs if o.t > t_bounce]
        if len(post) >= window:
            params = fit_trajectory(post[:window], stage="post-bounce")
            return predict_hit(params, hitting_plane_x)
        pre = [o for o in obs if o.t < t_bounce]
        if len(pre) >= window:
            params = fit_trajectory(pre[:window], stage="pre-bounce")
            return predict_hit(params, hitting_plane_x)
        raise InsufficientDataError("not enough observations on either bounce side")
    params = fit_trajectory(obs[:window] if len(obs) >= window else obs)
    return predict_hit(params, hitting_plane_x)


class TrajectoryPredictor(BaseEstimator):
    """Ballistic trajectory estimator with the scikit-learn fit/predict shape.

    ``fit`` takes timestamps (microseconds) and 3D positions, ``predict``
    evaluates fitted positions at new timestamps, and ``hit_state`` solves
    for the state at a vertical hitting plane.
    """

    def __init__(self, stage: str = "pre-bounce"):
        self.stage = stage

    def fit(self, t_us, positions):
        t_us = np.asarray(t_us, dtype=np.int64)
        positions = np.asarray(positions, dtype=float)
        obs = [
            BallObservation3D(t=int(ti), position=pi, residual=0.0)
            for ti, pi in zip(t_us, positions)
        ]
        self.params_ = fit_trajectory(obs, stage=self.stage)
        return self

    def predict(self, t_us) -> np.ndarray:
        if not hasattr(self, "params_"):
            raise DataError("predictor is not fitted")
        return self.params_.state_at(np.asarray(t_us, dtype=float))[0]

    def hit_state(self, hitting_plane_x: float) -> HitState:
        if not hasattr(self, "params_"):
            raise DataError("predictor is not fitted")
        return predict_hit(self.params_, hitting_plane_x)
