"""Synthetic stereo event-scene generator with exact ground truth.

Scenes are bright flat-shaded shapes (ball, distractor boards and limbs) on
a dark background, each one contrast step above the sensor threshold, so a
pixel fires exactly one event per coverage change: positive when a shape
covers it, negative when it uncovers. The ball's leading edge therefore
emits positive events -- the physical premise the polarity filter relies on.

Per-pixel references are pre-adapted to the scene at t = 0 (no startup
transient), thermal noise is homogeneous Poisson, and ground-truth labels
are emitted at every simulation step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ballistics import FlightPath, simulate_flight
from .env import EnvConfig, serve
from .errors import ConfigError
from .events import EventArray
from .geometry import CameraModel, StereoRig, standard_rig

DT_SIM_DEFAULT = 1e-3  # seconds; also the ground-truth label period


@dataclass
class RectDistractor:
    """Oscillating flat board in a vertical plane (a racket- or torso-like
    structure); edges sweep elongated event bands."""

    center: tuple[float, float, float]
    half_u: float
    half_v: float
    sweep_amp: tuple[float, float, float] = (0.0, 0.0, 0.0)
    sweep_hz: float = 1.0
    sweep_phase: float = 0.0
    tilt0: float = 0.0
    tilt_amp: float = 0.0
    tilt_hz: float = 1.0

    def pose(self, t: float):
        c = np.asarray(self.center) + np.asarray(self.sweep_amp) * math.sin(
            2 * math.pi * self.sweep_hz * t + self.sweep_phase
        )
        ang = self.tilt0 + self.tilt_amp * math.sin(2 * math.pi * self.tilt_hz * t)
        e1 = np.array([math.cos(ang), 0.0, math.sin(ang)])
        e2 = np.array([-math.sin(ang), 0.0, math.cos(ang)])
        corners = [
            c + su * self.half_u * e1 + sv * self.half_v * e2
            for su, sv in ((-1, -1), (1, -1), (1, 1), (-1, 1))
        ]
        return np.stack(corners)


@dataclass
class CapsuleDistractor:
    """Swinging limb: a segment of given radius pivoting in the x-z plane."""

    pivot: tuple[float, float, float]
    length: float
    radius: float
    swing0: float = 0.0
    swing_amp: float = 0.5
    swing_hz: float = 1.0
    swing_phase: float = 0.0

    def endpoints(self, t: float):
        phi = self.swing0 + self.swing_amp * math.sin(
            2 * math.pi * self.swing_hz * t + self.swing_phase
        )
        a = np.asarray(self.pivot, dtype=float)
        b = a + self.length * np.array([math.sin(phi), 0.0, -math.cos(phi)])
        return a, b


@dataclass
class SceneSpec:
    name: str
    ball_p0: tuple[float, float, float]
    ball_v0: tuple[float, float, float]
    ball_radius: float = 0.02
    distractors: list = field(default_factory=list)
    noise_rate: float = 10.0  # thermal events / pixel / second
    contrast_threshold: float = 0.2  # log-intensity step C; shapes sit at 2C
    duration: float = 0.8
    seed: int = 0
    restitution_z: float = 0.87
    friction_tangential: float = 0.05
    table_half_length: float = 1.37
    table_half_width: float = 0.7625

    def __post_init__(self):
        if self.ball_radius <= 0:
            raise ConfigError("ball_radius must be positive")
        if self.noise_rate < 0:
            raise ConfigError("noise_rate must be non-negative")
        if self.contrast_threshold <= 0:
            raise ConfigError("contrast_threshold must be positive")

    def ball_flight(self) -> FlightPath:
        table = (
            -self.table_half_length, self.table_half_length,
            -self.table_half_width, self.table_half_width,
        )
        return simulate_flight(
            self.ball_p0, self.ball_v0,
            contact_z=self.ball_radius,
            restitution_z=self.restitution_z,
            friction_tangential=self.friction_tangential,
            bounce_region=table,
            duration=self.duration,
        )


@dataclass
class GroundTruthLabel:
    """Stereo ground truth at one instant: image-plane circles and 3D center.

    ``visible`` means the full ball disk lies inside both sensors; the
    per-camera flags support single-camera scoring, and ``partial_*`` marks
    frames where the disk straddles that camera's border (a don't-care band
    for detection scoring).
    """

    t: int  # microseconds
    u_left: float
    v_left: float
    r_left: float
    u_right: float
    v_right: float
    r_right: float
    position: np.ndarray
    visible: bool
    visible_left: bool = False
    visible_right: bool = False
    partial_left: bool = False
    partial_right: bool = False


@dataclass
class SceneRender:
    events_left: EventArray
    events_right: EventArray
    labels: list[GroundTruthLabel]
    sensor_dims: tuple[int, int]


def _clip_bbox(x0, x1, y0, y1, dims):
    w, h = dims
    x0, x1 = max(int(math.floor(x0)), 0), min(int(math.ceil(x1)), w - 1)
    y0, y1 = max(int(math.floor(y0)), 0), min(int(math.ceil(y1)), h - 1)
    if x0 > x1 or y0 > y1:
        return None
    return (x0, x1, y0, y1)


class _BallSprite:
    def __init__(self, flight: FlightPath, radius: float):
        self.flight = flight
        self.radius = radius

    def center(self, t: float) -> np.ndarray:
        return self.flight.state_at(t)[0]

    def bbox(self, cam: CameraModel, t: float):
        u, v, depth = cam.project(self.center(t))
        if not np.isfinite(u) or depth <= 0:
            return None
        r = cam.radius_px(self.center(t), self.radius)
        return _clip_bbox(u - r - 1, u + r + 1, v - r - 1, v + r + 1, cam.sensor_dims)

    def cover(self, cam: CameraModel, t: float, xs, ys):
        u, v, depth = cam.project(self.center(t))
        if not np.isfinite(u) or depth <= 0:
            return np.zeros((len(ys), len(xs)), dtype=bool)
        r = cam.radius_px(self.center(t), self.radius)
        gx, gy = np.meshgrid(xs, ys)
        return (gx - u) ** 2 + (gy - v) ** 2 <= r * r


class _RectSprite:
    def __init__(self, rect: RectDistractor):
        self.rect = rect

    def _corners_px(self, cam: CameraModel, t: float):
        pts = []
        for corner in self.rect.pose(t):
            u, v, depth = cam.project(corner)
            if not np.isfinite(u) or depth <= 0:
                return None
            pts.append((u, v))
        return np.array(pts)

    def bbox(self, cam: CameraModel, t: float):
        pts = self._corners_px(cam, t)
        if pts is None:
            return None
        return _clip_bbox(pts[:, 0].min() - 1, pts[:, 0].max() + 1,
                          pts[:, 1].min() - 1, pts[:, 1].max() + 1, cam.sensor_dims)

    def cover(self, cam: CameraModel, t: float, xs, ys):
        pts = self._corners_px(cam, t)
        if pts is None:
            return np.zeros((len(ys), len(xs)), dtype=bool)
        area2 = 0.0
        for i in range(4):
            x1, y1 = pts[i]
            x2, y2 = pts[(i + 1) % 4]
            area2 += x1 * y2 - x2 * y1
        if area2 < 0:
            pts = pts[::-1]
        gx, gy = np.meshgrid(xs, ys)
        inside = np.ones(gx.shape, dtype=bool)
        for i in range(4):
            x1, y1 = pts[i]
            x2, y2 = pts[(i + 1) % 4]
            inside &= (x2 - x1) * (gy - y1) - (y2 - y1) * (gx - x1) >= 0
        return inside


class _CapsuleSprite:
    def __init__(self, cap: CapsuleDistractor):
        self.cap = cap

    def _segment_px(self, cam: CameraModel, t: float):
        a, b = self.cap.endpoints(t)
        ua, va, da = cam.project(a)
        ub, vb, db = cam.project(b)
        if not (np.isfinite(ua) and np.isfinite(ub)) or da <= 0 or db <= 0:
            return None
        r = cam.focal_px * self.cap.radius / (0.5 * (da + db))
        return (ua, va), (ub, vb), r

    def bbox(self, cam: CameraModel, t: float):
        seg = self._segment_px(cam, t)
        if seg is None:
            return None
        (ua, va), (ub, vb), r = seg
        return _clip_bbox(min(ua, ub) - r - 1, max(ua, ub) + r + 1,
                          min(va, vb) - r - 1, max(va, vb) + r + 1, cam.sensor_dims)

    def cover(self, cam: CameraModel, t: float, xs, ys):
        seg = self._segment_px(cam, t)
        if seg is None:
            return np.zeros((len(ys), len(xs)), dtype=bool)
        (ua, va), (ub, vb), r = seg
        gx, gy = np.meshgrid(xs, ys)
        dx, dy = ub - ua, vb - va
        ll = dx * dx + dy * dy
        if ll == 0:
            dist2 = (gx - ua) ** 2 + (gy - va) ** 2
        else:
            s = np.clip(((gx - ua) * dx + (gy - va) * dy) / ll, 0.0, 1.0)
            dist2 = (gx - (ua + s * dx)) ** 2 + (gy - (va + s * dy)) ** 2
        return dist2 <= r * r


def _make_sprites(scene: SceneSpec):
    sprites = [_BallSprite(scene.ball_flight(), scene.ball_radius)]
    for d in scene.distractors:
        if isinstance(d, RectDistractor):
            sprites.append(_RectSprite(d))
        elif isinstance(d, CapsuleDistractor):
            sprites.append(_CapsuleSprite(d))
        else:
            raise ConfigError(f"unknown distractor type {type(d).__name__}")
    return sprites


def _merge_regions(boxes):
    """Group overlapping dirty rectangles; return covering boxes per group."""
    boxes = [b for b in boxes if b is not None]
    merged: list[list[int]] = []
    for b in boxes:
        b = list(b)
        changed = True
        while changed:
            changed = False
            for i, m in enumerate(merged):
                if b[0] <= m[1] and m[0] <= b[1] and b[2] <= m[3] and m[2] <= b[3]:
                    b = [min(b[0], m[0]), max(b[1], m[1]),
                         min(b[2], m[2]), max(b[3], m[3])]
                    merged.pop(i)
                    changed = True
                    break
        merged.append(b)
    return [tuple(m) for m in merged]


def simulate_events(
    scene: SceneSpec,
    camera: CameraModel,
    dt_sim: float = DT_SIM_DEFAULT,
    rng: np.random.Generator | None = None,
) -> EventArray:
    """Render one camera's event stream for the scene.

    Each sim step diffs shape coverage against the per-pixel reference and
    emits one event per changed pixel (positive = newly covered); Poisson
    thermal noise at ``noise_rate`` is superimposed with random polarity.
    """
    if dt_sim > DT_SIM_DEFAULT + 1e-12:
        raise ConfigError(f"dt_sim {dt_sim} exceeds the {DT_SIM_DEFAULT}s resolution bound")
    rng = rng or np.random.default_rng(scene.seed)
    w, h = camera.sensor_dims
    sprites = _make_sprites(scene)
    n_steps = int(round(scene.duration / dt_sim))
    step_us = int(round(dt_sim * 1e6))

    prev = np.zeros((h, w), dtype=bool)
    for sp in sprites:
        box = sp.bbox(camera, 0.0)
        if box is not None:
            x0, x1, y0, y1 = box
            xs, ys = np.arange(x0, x1 + 1), np.arange(y0, y1 + 1)
            prev[y0 : y1 + 1, x0 : x1 + 1] |= sp.cover(camera, 0.0, xs, ys)

    lam = scene.noise_rate * w * h * dt_sim
    chunks: list[EventArray] = []
    for k in range(1, n_steps + 1):
        t0, t1 = (k - 1) * dt_sim, k * dt_sim
        t_us = k * step_us
        boxes = [sp.bbox(camera, t0) for sp in sprites] + [
            sp.bbox(camera, t1) for sp in sprites
        ]
        sig_x, sig_y, sig_p = [], [], []
        for region in _merge_regions(boxes):
            x0, x1, y0, y1 = region
            xs, ys = np.arange(x0, x1 + 1), np.arange(y0, y1 + 1)
            cover = np.zeros((len(ys), len(xs)), dtype=bool)
            for sp in sprites:
                cover |= sp.cover(camera, t1, xs, ys)
            old = prev[y0 : y1 + 1, x0 : x1 + 1]
            diff = cover != old
            if diff.any():
                yy, xx = np.nonzero(diff)
                sig_x.append(xx + x0)
                sig_y.append(yy + y0)
                sig_p.append(cover[yy, xx].astype(np.uint8))
            prev[y0 : y1 + 1, x0 : x1 + 1] = cover

        n_noise = rng.poisson(lam) if lam > 0 else 0
        if n_noise:
            nx = rng.integers(0, w, n_noise)
            ny = rng.integers(0, h, n_noise)
            npol = rng.integers(0, 2, n_noise).astype(np.uint8)
            nt = rng.integers(t_us - step_us + 1, t_us + 1, n_noise)
        else:
            nx = ny = npol = nt = np.empty(0, dtype=np.int64)

        ex = np.concatenate([*(sig_x or [np.empty(0, int)]), nx]).astype(np.int32)
        ey = np.concatenate([*(sig_y or [np.empty(0, int)]), ny]).astype(np.int32)
        ep = np.concatenate([*(sig_p or [np.empty(0, np.uint8)]), npol]).astype(np.uint8)
        et = np.concatenate(
            [np.full(sum(len(a) for a in sig_x), t_us, np.int64), nt.astype(np.int64)]
        )
        order = np.lexsort((ep, ex, ey, et))
        chunks.append(EventArray(ex[order], ey[order], et[order], ep[order]))

    return EventArray.concatenate(chunks)


def _camera_circle(cam: CameraModel, pos, radius):
    u, v, depth = cam.project(pos)
    if not np.isfinite(u) or depth <= 0:
        return np.nan, np.nan, np.nan, False, False
    r = cam.radius_px(pos, radius)
    w, h = cam.sensor_dims
    fully_inside = (r <= u <= w - 1 - r) and (r <= v <= h - 1 - r)
    overlaps = (-r <= u <= w - 1 + r) and (-r <= v <= h - 1 + r)
    return u, v, r, fully_inside, overlaps and not fully_inside


def scene_labels(
    scene: SceneSpec, rig: StereoRig, dt_sim: float = DT_SIM_DEFAULT
) -> list[GroundTruthLabel]:
    """Ground-truth stereo circles at every sim step; visible requires the
    full ball disk inside both sensors."""
    flight = scene.ball_flight()
    n_steps = int(round(scene.duration / dt_sim))
    step_us = int(round(dt_sim * 1e6))
    labels = []
    for k in range(n_steps + 1):
        t = k * dt_sim
        pos = flight.state_at(t)[0]
        ul, vl, rl, vis_l, part_l = _camera_circle(rig.left, pos, scene.ball_radius)
        ur, vr, rr, vis_r, part_r = _camera_circle(rig.right, pos, scene.ball_radius)
        labels.append(GroundTruthLabel(
            t=k * step_us, u_left=ul, v_left=vl, r_left=rl,
            u_right=ur, v_right=vr, r_right=rr,
            position=pos, visible=bool(vis_l and vis_r),
            visible_left=bool(vis_l), visible_right=bool(vis_r),
            partial_left=bool(part_l), partial_right=bool(part_r),
        ))
    return labels


def simulate_scene(
    scene: SceneSpec, rig: StereoRig | None = None, dt_sim: float = DT_SIM_DEFAULT
) -> SceneRender:
    """Render both cameras plus labels, with independent noise substreams."""
    rig = rig or standard_rig()
    ss = np.random.SeedSequence(scene.seed)
    rng_l, rng_r = (np.random.default_rng(c) for c in ss.spawn(2))
    events_l = simulate_events(scene, rig.left, dt_sim, rng_l)
    events_r = simulate_events(scene, rig.right, dt_sim, rng_r)
    labels = scene_labels(scene, rig, dt_sim)
    if not any(lb.visible for lb in labels):
        import warnings

        warnings.warn(f"scene {scene.name}: ball never visible to both cameras")
    return SceneRender(events_l, events_r, labels, rig.left.sensor_dims)


def _serve_ball(speed: float, seed: int) -> tuple[tuple, tuple, float]:
    """Sample a rally-valid ball flight for a scene (position, velocity, hit time)."""
    cfg = EnvConfig(serve_speed=speed)
    result = serve(cfg, np.random.default_rng(seed))
    _, p0, v0 = result.flight.arcs[0]
    return tuple(p0), tuple(v0), result.hit_time


def standard_scenes() -> list[tuple[str, SceneSpec]]:
    """Deterministic scene catalog: three ball-only scenes at 5/4/3 m/s and
    four distractor scenes (asterisk names) mixing boards and limbs."""
    catalog: list[tuple[str, SceneSpec]] = []

    board = RectDistractor(
        center=(-0.05, 0.45, 0.42), half_u=0.07, half_v=0.12,
        sweep_amp=(0.22, 0.0, 0.05), sweep_hz=1.6,
        tilt0=0.25, tilt_amp=0.5, tilt_hz=1.6,
    )
    board_slow = RectDistractor(
        center=(1.05, 0.55, 0.55), half_u=0.09, half_v=0.16,
        sweep_amp=(0.12, 0.0, 0.10), sweep_hz=1.1, sweep_phase=1.0,
        tilt0=-0.2, tilt_amp=0.35, tilt_hz=0.9,
    )
    limb = CapsuleDistractor(
        pivot=(0.48, 0.55, 0.78), length=0.34, radius=0.035,
        swing0=0.15, swing_amp=0.65, swing_hz=1.4,
    )
    limb_far = CapsuleDistractor(
        pivot=(1.30, 0.60, 0.85), length=0.38, radius=0.04,
        swing0=-0.2, swing_amp=0.55, swing_hz=1.0, swing_phase=2.0,
    )

    specs = [
        ("synth1", 5.0, [], 101),
        ("synth2", 4.0, [], 102),
        ("synth3", 3.0, [], 103),
        ("synth4*", 4.0, [board], 104),
        ("synth5*", 5.0, [board_slow], 105),
        ("synth6*", 3.0, [limb], 106),
        ("synth7*", 4.0, [board, limb_far], 107),
    ]
    for name, speed, distractors, seed in specs:
        p0, v0, hit_time = _serve_ball(speed, seed)
        catalog.append((name, SceneSpec(
            name=name, ball_p0=p0, ball_v0=v0,
            distractors=list(distractors),
            noise_rate=10.0, duration=round(hit_time + 0.02, 3), seed=seed,
        )))
    return catalog


def scene_by_name(name: str) -> SceneSpec:
    for scene_name, spec in standard_scenes():
        if scene_name == name:
            return spec
    known = ", ".join(n for n, _ in standard_scenes())
    raise ConfigError(f"unknown scene {name!r}; known scenes: {known}")


def scene_slug(name: str) -> str:
    """File-system-safe scene name (asterisk marks distractor scenes)."""
    return name.replace("*", "s")


LABELS_HEADER = "t,u_left,v_left,r_left,u_right,v_right,r_right,x,y,z,visible"


def write_labels_csv(path, labels: list[GroundTruthLabel]) -> None:
    with open(path, "w") as fh:
        fh.write(LABELS_HEADER + "\n")
        for lb in labels:
            fh.write(
                f"{lb.t},{lb.u_left:.6f},{lb.v_left:.6f},{lb.r_left:.6f},"
                f"{lb.u_right:.6f},{lb.v_right:.6f},{lb.r_right:.6f},"
                f"{lb.position[0]:.9f},{lb.position[1]:.9f},{lb.position[2]:.9f},"
                f"{int(lb.visible)}\n"
            )


def read_labels_csv(path) -> list[GroundTruthLabel]:
    labels = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != LABELS_HEADER:
            raise ConfigError(f"unexpected labels header {header!r}")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 11:
                raise ConfigError(f"bad labels row: {line!r}")
            labels.append(GroundTruthLabel(
                t=int(parts[0]),
                u_left=float(parts[1]), v_left=float(parts[2]), r_left=float(parts[3]),
                u_right=float(parts[4]), v_right=float(parts[5]), r_right=float(parts[6]),
                position=np.array([float(parts[7]), float(parts[8]), float(parts[9])]),
                visible=bool(int(parts[10])),
            ))
    return labels
