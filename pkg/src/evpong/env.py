"""One-step table-tennis rally environment.

An episode is: serve a ball to the hitting plane, apply the agent's racket
orientation as an instantaneous reflection, fly the return, and classify
where it first lands. The four landing cases:

1. robot's own half of the table,
2. net contact,
3. off the table (inside the bounded valid region, or clamped at its edge),
4. opponent's half -- a successful return.

The racket is orientation-only (no translational velocity); its restitution
may exceed 1 to stand in for the swing energy a real arm would add.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ballistics import (
    GRAVITY,
    descent_time_to_height,
    eval_arc,
    simulate_flight,
    time_to_plane_x,
    FlightPath,
)
from .errors import ConfigError
from .rotations import quat_rotate

RACKET_FACE_NORMAL = np.array([-1.0, 0.0, 0.0])  # face direction at identity orientation


@dataclass
class EnvConfig:
    table_length: float = 2.74
    table_width: float = 1.525
    table_height: float = 0.76
    net_height: float = 0.1525
    net_overhang: float = 0.1525
    restitution_z: float = 0.87
    friction_tangential: float = 0.05
    racket_restitution: float = 1.8
    ball_radius: float = 0.02
    serve_speed: float = 5.0
    serve_x_range: tuple[float, float] = (-0.75, -0.35)
    serve_y_range: tuple[float, float] = (-0.30, 0.30)
    serve_z_range: tuple[float, float] = (0.30, 0.50)
    serve_bounce_x_range: tuple[float, float] = (0.45, 0.95)
    serve_bounce_y_range: tuple[float, float] = (-0.40, 0.40)
    boundary_margin: float = 1.0
    overshoot_norm: float = 4.0
    hitting_plane_x: float = 1.6
    min_hit_height: float = 0.12
    dt: float = 0.01
    max_serve_retries: int = 200

    def __post_init__(self):
        if not 0.0 < self.restitution_z <= 1.0:
            raise ConfigError(f"restitution_z {self.restitution_z} outside (0, 1]")
        if not 0.0 <= self.friction_tangential <= 1.0:
            raise ConfigError(f"friction_tangential {self.friction_tangential} outside [0, 1]")
        if self.hitting_plane_x <= self.table_length / 2:
            raise ConfigError("hitting plane must sit behind the robot-side table edge")

    @property
    def half_length(self) -> float:
        return self.table_length / 2

    @property
    def half_width(self) -> float:
        return self.table_width / 2

    @property
    def net_half_span(self) -> float:
        return self.half_width + self.net_overhang

    @property
    def d_max(self) -> float:
        """Opponent-half diagonal: normalizer for the target-distance term."""
        return float(np.hypot(self.half_length, self.table_width))

    @property
    def d_max2(self) -> float:
        return self.half_length

    @property
    def d_max3(self) -> float:
        """Off-table penalty normalizer.

        Sized to the worst overshoot a racket reflection produces (not the
        1 m valid-region margin): normalizing by the margin saturates the
        penalty for most overshoots and kills its gradient.
        """
        return self.overshoot_norm


@dataclass
class BallState:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise ConfigError("non-finite ball state")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])


@dataclass
class LandingOutcome:
    case: int
    f: np.ndarray  # landing / contact point
    d: float = 0.0  # case 4: distance landing -> target
    d2: float = 0.0  # case 1: distance landing -> net line
    d3: float = 0.0  # case 3: distance landing -> opponent half
    d_max: float = 1.0
    d_max2: float = 1.0
    d_max3: float = 1.0
    contact_velocity: np.ndarray = None

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        if self.contact_velocity is None:
            self.contact_velocity = np.zeros(3)
        self.contact_velocity = np.asarray(self.contact_velocity, dtype=float)
        if self.case not in (1, 2, 3, 4):
            raise ConfigError(f"landing case {self.case} invalid")


@dataclass
class ServeResult:
    """Ball served to the hitting plane, with its observable flight."""

    hit_state: BallState
    hit_time: float  # seconds from serve release
    flight: FlightPath
    observations: list[tuple[float, np.ndarray]] = field(default_factory=list)


def _sample_serve(cfg: EnvConfig, rng: np.random.Generator):
    """Sample a start position and target bounce point; solve the launch
    angle in closed form so the serve is valid across speeds.

    Returns the start position and the ballistic launch velocities (low arc
    first, then the lofted arc) that pass through the bounce aim, or an
    empty list when the serve speed cannot reach it.
    """
    p0 = np.array([
        rng.uniform(*cfg.serve_x_range),
        rng.uniform(*cfg.serve_y_range),
        rng.uniform(*cfg.serve_z_range),
    ])
    aim = np.array([
        rng.uniform(*cfg.serve_bounce_x_range),
        rng.uniform(*cfg.serve_bounce_y_range),
    ])
    delta = aim - p0[:2]
    dist = float(np.hypot(*delta))
    s = cfg.serve_speed
    # range equation in T = tan(pitch): a T^2 + b T + c = 0
    a = -GRAVITY * dist * dist / (2.0 * s * s)
    b = dist
    c = (p0[2] - cfg.ball_radius) + a
    disc = b * b - 4.0 * a * c
    candidates = []
    if disc >= 0.0:
        for tan_pitch in sorted(((-b + np.sqrt(disc)) / (2 * a),
                                 (-b - np.sqrt(disc)) / (2 * a))):
            pitch = np.arctan(tan_pitch)
            v0 = s * np.array([
                np.cos(pitch) * delta[0] / dist,
                np.cos(pitch) * delta[1] / dist,
                np.sin(pitch),
            ])
            candidates.append(v0)
    return p0, candidates


def _validate_serve(cfg: EnvConfig, p0, v0) -> ServeResult | None:
    """Fly a candidate serve; None when it breaks a rally precondition."""
    table = (-cfg.half_length, cfg.half_length, -cfg.half_width, cfg.half_width)
    flight = simulate_flight(
        p0, v0,
        contact_z=cfg.ball_radius,
        restitution_z=cfg.restitution_z,
        friction_tangential=cfg.friction_tangential,
        bounce_region=table,
        duration=3.0,
    )
    t_net = time_to_plane_x(p0, v0, 0.0)
    if t_net is None:
        return None
    z_net = eval_arc(p0, v0, t_net)[0][2]
    if z_net <= cfg.net_height:
        return None  # served into the net
    if not flight.bounce_times:
        return None
    t_b = flight.bounce_times[0]
    _, pb, vb = flight.arcs[1]
    if pb[0] <= 0.0:
        return None  # must bounce on the robot half
    t_plane = time_to_plane_x(pb, vb, cfg.hitting_plane_x)
    if t_plane is None:
        return None
    if len(flight.bounce_times) > 1 and t_b + t_plane >= flight.bounce_times[1]:
        return None  # double bounce before the plane
    pos, vel = eval_arc(pb, vb, t_plane)
    if pos[2] < cfg.min_hit_height:
        return None
    t_hit = t_b + t_plane
    obs_times = np.arange(0.0, t_hit, cfg.dt)
    observations = [(float(t), flight.state_at(float(t))[0]) for t in obs_times]
    return ServeResult(
        hit_state=BallState(pos, vel),
        hit_time=float(t_hit),
        flight=flight,
        observations=observations,
    )


def serve(cfg: EnvConfig, rng: np.random.Generator) -> ServeResult:
    """Sample serves until one reaches the hitting plane cleanly.

    An unplayable sample (net fault, wrong-half bounce, double bounce) is
    re-served, like a rally reset; persistent failure is a config error.
    """
    for _ in range(cfg.max_serve_retries):
        p0, candidates = _sample_serve(cfg, rng)
        for v0 in candidates:
            result = _validate_serve(cfg, p0, v0)
            if result is not None:
                return result
    raise ConfigError(
        f"no valid serve in {cfg.max_serve_retries} samples; check serve ranges"
    )


def racket_normal(orientation_quat: np.ndarray) -> np.ndarray:
    return quat_rotate(orientation_quat, RACKET_FACE_NORMAL)


def strike(s: BallState, orientation_quat: np.ndarray, cfg: EnvConfig) -> BallState | None:
    """Reflect the incoming ball off the oriented racket face.

    Returns None on a whiff (the face points away from the incoming ball).
    """
    q = np.asarray(orientation_quat, dtype=float)
    norm = np.linalg.norm(q)
    if abs(norm - 1.0) > 1e-6:
        raise ConfigError(f"racket quaternion not normalized (|q| = {norm:.6f})")
    n = racket_normal(q)
    v = s.velocity
    vn = float(v @ n)
    if vn >= 0.0:
        return None
    v_reflected = v - (1.0 + cfg.racket_restitution) * vn * n
    vn_out = float(v_reflected @ n)
    v_tan = v_reflected - vn_out * n
    v_out = vn_out * n + (1.0 - cfg.friction_tangential) * v_tan
    return BallState(s.position.copy(), v_out)


def _dist_to_rect(x: float, y: float, rect: tuple[float, float, float, float]) -> float:
    dx = max(rect[0] - x, 0.0, x - rect[1])
    dy = max(rect[2] - y, 0.0, y - rect[3])
    return float(np.hypot(dx, dy))


def whiff_outcome(s: BallState, cfg: EnvConfig) -> LandingOutcome:
    """Missed ball: worst-case off-table outcome."""
    return LandingOutcome(
        case=3, f=s.position.copy(), d3=cfg.d_max3,
        d_max=cfg.d_max, d_max2=cfg.d_max2, d_max3=cfg.d_max3,
        contact_velocity=s.velocity.copy(),
    )


def classify_landing(s: BallState, target: np.ndarray, cfg: EnvConfig) -> LandingOutcome:
    """Fly the return from the hit state and classify its first contact."""
    p, v = s.position, s.velocity
    target = np.asarray(target, dtype=float)
    t_land = descent_time_to_height(p, v, cfg.ball_radius)
    t_net = time_to_plane_x(p, v, 0.0)
    common = dict(d_max=cfg.d_max, d_max2=cfg.d_max2, d_max3=cfg.d_max3)

    if t_net is not None and (t_land is None or t_net < t_land):
        pos_net, vel_net = eval_arc(p, v, t_net)
        if pos_net[2] <= cfg.net_height and abs(pos_net[1]) <= cfg.net_half_span:
            f = np.array([0.0, pos_net[1], pos_net[2]])
            return LandingOutcome(case=2, f=f, contact_velocity=vel_net, **common)

    pos, vel = eval_arc(p, v, t_land)
    f = np.array([pos[0], pos[1], cfg.ball_radius])
    fx, fy = float(f[0]), float(f[1])
    on_table_y = abs(fy) <= cfg.half_width
    if on_table_y and 0.0 <= fx <= cfg.half_length:
        return LandingOutcome(case=1, f=f, d2=fx, contact_velocity=vel, **common)
    if on_table_y and -cfg.half_length <= fx < 0.0:
        d = float(np.hypot(fx - target[0], fy - target[1]))
        return LandingOutcome(case=4, f=f, d=d, contact_velocity=vel, **common)
    opp_rect = (-cfg.half_length, 0.0, -cfg.half_width, cfg.half_width)
    d3 = min(_dist_to_rect(fx, fy, opp_rect), cfg.d_max3)
    return LandingOutcome(case=3, f=f, d3=d3, contact_velocity=vel, **common)
