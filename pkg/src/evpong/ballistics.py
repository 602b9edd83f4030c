"""Closed-form point-mass flight under gravity with table bounces.

All trajectories in the package are piecewise parabolic arcs: only gravity
acts in flight, and a bounce rescales the velocity instantaneously. Using
exact arc evaluation (rather than stepped integration) keeps generated
ground truth consistent with the ballistic model the predictor fits.

World frame: x along the table toward the robot, y across the table, z up,
origin at the table center on the playing surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRAVITY = 9.81  # m/s^2, downward


def eval_arc(p0, v0, t):
    """Position and velocity at time t (scalar or array) along one arc."""
    t = np.asarray(t, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    tt = t[..., None]
    acc = np.array([0.0, 0.0, -GRAVITY])
    pos = p0 + v0 * tt + 0.5 * acc * tt**2
    vel = v0 + acc * tt
    return pos, vel


def descent_time_to_height(p0, v0, h: float) -> float | None:
    """First t > 0 at which the arc crosses height ``h`` moving downward.

    Returns None when the arc never descends through ``h``.
    """
    z0, vz = float(p0[2]), float(v0[2])
    disc = vz * vz - 2.0 * GRAVITY * (h - z0)
    if disc < 0.0:
        return None
    t = (vz + np.sqrt(disc)) / GRAVITY  # larger root: downward crossing
    return t if t > 1e-12 else None


def time_to_plane_x(p0, v0, plane_x: float) -> float | None:
    """First t > 0 at which x(t) == plane_x, or None if moving away/parallel."""
    vx = float(v0[0])
    if vx == 0.0:
        return None
    t = (plane_x - float(p0[0])) / vx
    return t if t > 1e-12 else None


def bounce_velocity(v, restitution_z: float, friction_tangential: float) -> np.ndarray:
    """Table-bounce velocity map: vertical restitution, tangential friction."""
    v = np.asarray(v, dtype=float)
    return np.array([
        v[0] * (1.0 - friction_tangential),
        v[1] * (1.0 - friction_tangential),
        -restitution_z * v[2],
    ])


@dataclass
class FlightPath:
    """Piecewise-parabolic trajectory with recorded bounce times.

    ``arcs`` holds (t_start, p0, v0) per arc; arc k is valid on
    [t_start_k, t_start_{k+1}) and the last arc extends to ``duration``.
    """

    arcs: list[tuple[float, np.ndarray, np.ndarray]]
    bounce_times: list[float] = field(default_factory=list)
    duration: float = np.inf

    def state_at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        starts = [a[0] for a in self.arcs]
        k = int(np.searchsorted(starts, t, side="right")) - 1
        k = max(k, 0)
        t0, p0, v0 = self.arcs[k]
        return eval_arc(p0, v0, t - t0)

    def positions_at(self, times) -> np.ndarray:
        return np.stack([self.state_at(float(t))[0] for t in np.atleast_1d(times)])


def simulate_flight(
    p0,
    v0,
    *,
    contact_z: float,
    restitution_z: float,
    friction_tangential: float,
    bounce_region: tuple[float, float, float, float] | None,
    duration: float,
    max_bounces: int = 8,
) -> FlightPath:
    """Fly a point mass, bouncing wherever it descends to ``contact_z`` inside
    ``bounce_region`` (x_min, x_max, y_min, y_max); None bounces everywhere.
    Outside the region the ball simply keeps falling through the plane.
    """
    p = np.asarray(p0, dtype=float).copy()
    v = np.asarray(v0, dtype=float).copy()
    t = 0.0
    arcs = [(t, p.copy(), v.copy())]
    bounces: list[float] = []
    for _ in range(max_bounces):
        td = descent_time_to_height(p, v, contact_z)
        if td is None or t + td >= duration:
            break
        pos, vel = eval_arc(p, v, td)
        inside = bounce_region is None or (
            bounce_region[0] <= pos[0] <= bounce_region[1]
            and bounce_region[2] <= pos[1] <= bounce_region[3]
        )
        if not inside:
            break
        t += td
        p = pos
        p[2] = contact_z  # exact contact, kill rounding residue
        v = bounce_velocity(vel, restitution_z, friction_tangential)
        arcs.append((t, p.copy(), v.copy()))
        bounces.append(t)
    return FlightPath(arcs=arcs, bounce_times=bounces, duration=duration)
