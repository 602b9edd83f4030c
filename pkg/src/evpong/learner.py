"""One-step deterministic-policy-gradient learner for racket orientation.

The reward is case-dependent and temporally adaptive: failed returns earn
graded penalties by failure mode, and the successful-return reward shifts
with the episode index from a flat base bonus toward target accuracy. When
the curriculum moves to a faster serve stage, the replay buffer migrates
only transitions whose reward clears a threshold, so the new stage starts
from proven successes without dragging stale failures along.

Episodes are single-step: a landing is terminal, so the critic regresses
directly onto the reward (an optional flag restores the bootstrap term for
study).
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator

from .env import (
    BallState,
    EnvConfig,
    LandingOutcome,
    classify_landing,
    serve,
    strike,
    whiff_outcome,
)
from .errors import ConfigError, DataError, DivergedTrainingError
from .nets import MLP, Adam, soft_update
from .rotations import quat_from_axis_angle, quat_from_euler_xyz, quat_multiply, quat_normalize


@dataclass
class RewardConfig:
    """Penalty/bonus coefficients.

    lambda3 * d3 / d_max3 keeps a one-penalty-point-per-meter slope out to
    the full overshoot normalizer, so deep overshoots still carry a usable
    gradient instead of saturating.
    """

    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 4.0
    lambda_base: float = 1.0
    lambda_scale: float = 2.0
    beta: float = 0.01  # episode-weight decay rate
    h_net: float = 0.1525

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "lambda_base", "lambda_scale", "beta"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be strictly positive")


def cdta_weights(n: int, beta: float) -> tuple[float, float]:
    """Episode-dependent success-reward weights (w1, w2) = (e^-bn, 1 - e^-bn)."""
    if n < 0:
        raise DataError(f"episode index {n} negative")
    if beta <= 0:
        raise DataError(f"beta {beta} must be positive")
    w1 = float(np.exp(-beta * n))
    return w1, 1.0 - w1


def cdta_reward(outcome: LandingOutcome, n: int, cfg: RewardConfig) -> float:
    """Case-dependent temporally-adaptive reward for one landing outcome."""
    if outcome.case == 1:
        return -cfg.lambda1 * outcome.d2 / outcome.d_max2
    if outcome.case == 2:
        return -cfg.lambda2 * (1.0 - float(outcome.f[2]) / cfg.h_net)
    if outcome.case == 3:
        return -cfg.lambda3 * outcome.d3 / outcome.d_max3
    w1, w2 = cdta_weights(n, cfg.beta)
    r1 = cfg.lambda_base
    r2 = cfg.lambda_base + cfg.lambda_scale * max(0.0, 1.0 - outcome.d / outcome.d_max)
    return w1 * r1 + w2 * r2


def simple_reward(outcome: LandingOutcome, cfg: RewardConfig) -> float:
    """Success-only baseline: base reward on the opponent half, nothing else."""
    return cfg.lambda_base if outcome.case == 4 else 0.0


@dataclass
class Transition:
    s: np.ndarray  # hit state, R^6
    g: np.ndarray  # target landing point, R^2
    a: np.ndarray  # normalized action, R^3 in [-1, 1]
    r: float
    s_next: np.ndarray  # landing position and velocity, R^6
    episode: int  # stage-local episode index at collection time
    stage_speed: float  # serve speed tag, m/s

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        self.s_next = np.asarray(self.s_next, dtype=float)
        if np.any(np.abs(self.a) > 1.0 + 1e-12):
            raise DataError(f"action {self.a} outside [-1, 1]")


class ReplayBuffer:
    """FIFO transition store with uniform sampling."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        self.capacity = capacity
        self.rng = rng
        self._store: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._store)

    def add(self, tr: Transition) -> None:
        self._store.append(tr)

    def sample(self, batch_size: int) -> list[Transition]:
        idx = self.rng.choice(len(self._store), size=batch_size,
                              replace=len(self._store) < batch_size)
        return [self._store[int(i)] for i in idx]

    @property
    def transitions(self) -> list[Transition]:
        return list(self._store)


def migrate_buffer(old: ReplayBuffer, delta: float) -> ReplayBuffer:
    """New-stage buffer seeded with exactly the old transitions with r >= delta."""
    fresh = ReplayBuffer(old.capacity, old.rng)
    for tr in old.transitions:
        if tr.r >= delta:
            fresh.add(tr)
    return fresh


@dataclass
class ExplorationSchedule:
    eta0: float = 0.1
    eta_min: float = 0.01
    gamma: float = 0.99  # decay rate per episode, < 1

    def __post_init__(self):
        if self.eta_min > self.eta0:
            raise ConfigError("eta_min must not exceed eta0")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("exploration decay rate must lie in (0, 1)")


def exploration_noise(n: int, sched: ExplorationSchedule) -> float:
    """max(eta_min, eta0 * gamma^n)."""
    if n < 0:
        raise DataError(f"episode index {n} negative")
    return max(sched.eta_min, sched.eta0 * sched.gamma**n)


def action_to_quaternion(a: np.ndarray, base_quat: np.ndarray,
                         max_rotation_deg: float) -> np.ndarray:
    """Map a normalized action to a racket orientation.

    Euler increments of max_rotation_deg * a are applied in intrinsic x-y-z
    order on top of the base orientation; the result is normalized.
    """
    angles = np.deg2rad(max_rotation_deg) * np.asarray(a, dtype=float)
    q_inc = quat_from_euler_xyz(angles)
    return quat_normalize(quat_multiply(base_quat, q_inc))


@dataclass
class AgentParams:
    """All learnable state of the agent: networks, targets, optimizers, and
    the action-to-orientation mapping constants."""

    actor: MLP
    critic: MLP
    actor_target: MLP
    critic_target: MLP
    actor_opt: Adam
    critic_opt: Adam
    gamma_disc: float
    tau_soft: float
    base_quat: np.ndarray
    max_rotation_deg: float


class DdpgAgent(BaseEstimator):
    """Actor-critic pair over (ball state, target) with deterministic actions.

    Scikit-learn estimator surface: hyperparameters in the constructor,
    ``predict`` maps states and goals to normalized actions. Training state
    is created lazily by ``init_params``.
    """

    def __init__(
        self,
        hidden: int = 128,
        actor_lr: float = 1e-3,
        critic_lr: float = 1e-3,
        critic_weight_decay: float = 1e-2,
        tau_soft: float = 0.005,
        gamma_disc: float = 0.99,
        use_bootstrap: bool = False,
        batch_size: int = 64,
        buffer_capacity: int = 10_000,
        updates_per_episode: int = 12,
        base_tilt_deg: float = 10.0,
        max_rotation_deg: float = 15.0,
        random_state: int | None = None,
    ):
        self.hidden = hidden
        self.actor_lr = actor_lr
        self.critic_lr = critic_lr
        self.critic_weight_decay = critic_weight_decay
        self.tau_soft = tau_soft
        self.gamma_disc = gamma_disc
        self.use_bootstrap = use_bootstrap
        self.batch_size = batch_size
        self.buffer_capacity = buffer_capacity
        self.updates_per_episode = updates_per_episode
        self.base_tilt_deg = base_tilt_deg
        self.max_rotation_deg = max_rotation_deg
        self.random_state = random_state

    STATE_DIM = 6
    GOAL_DIM = 2
    ACTION_DIM = 3

    def init_params(self, rng: np.random.Generator | None = None) -> AgentParams:
        rng = rng or np.random.default_rng(self.random_state)
        actor = MLP(self.STATE_DIM + self.GOAL_DIM, self.hidden, self.ACTION_DIM,
                    "tanh", rng)
        critic = MLP(self.STATE_DIM + self.GOAL_DIM + self.ACTION_DIM, self.hidden, 1,
                     "linear", rng)
        base_quat = quat_from_axis_angle([0.0, 1.0, 0.0], np.deg2rad(self.base_tilt_deg))
        self.params_ = AgentParams(
            actor=actor,
            critic=critic,
            actor_target=actor.clone(),
            critic_target=critic.clone(),
            actor_opt=Adam([p.shape for p in actor.params], lr=self.actor_lr),
            critic_opt=Adam([p.shape for p in critic.params], lr=self.critic_lr),
            gamma_disc=self.gamma_disc,
            tau_soft=self.tau_soft,
            base_quat=base_quat,
            max_rotation_deg=self.max_rotation_deg,
        )
        return self.params_

    def _require_params(self) -> AgentParams:
        if not hasattr(self, "params_"):
            raise DataError("agent has no parameters; call init_params first")
        return self.params_

    # fixed feature scaling: positions, velocities and goals to roughly unit
    # range so the critic's action sensitivity is not drowned out
    _SG_SCALE = np.array([0.5, 1.0, 2.0, 0.2, 0.2, 0.2, 0.7, 1.25])

    def _features(self, states, goals) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        goals = np.atleast_2d(np.asarray(goals, dtype=float))
        return np.hstack([states, goals]) * self._SG_SCALE

    def predict(self, states, goals) -> np.ndarray:
        """Deterministic (noise-free) normalized actions for state/goal batches."""
        p = self._require_params()
        return p.actor(self._features(states, goals))

    def act(self, s, g, eta: float, rng: np.random.Generator
            ) -> tuple[np.ndarray, np.ndarray]:
        """Noisy action plus the racket quaternion it maps to.

        Gaussian exploration of scale eta is added in normalized action space
        and re-clipped to [-1, 1] before the rotation scaling.
        """
        p = self._require_params()
        a = self.predict(s, g)[0]
        if eta > 0:
            a = a + rng.normal(0.0, eta, size=a.shape)
        a = np.clip(a, -1.0, 1.0)
        return a, action_to_quaternion(a, p.base_quat, p.max_rotation_deg)

    @staticmethod
    def _batch_arrays(batch: list[Transition]):
        s = np.stack([tr.s for tr in batch])
        g = np.stack([tr.g for tr in batch])
        a = np.stack([tr.a for tr in batch])
        r = np.array([tr.r for tr in batch], dtype=float)
        s_next = np.stack([tr.s_next for tr in batch])
        return s, g, a, r, s_next

    def _targets(self, batch: list[Transition]) -> np.ndarray:
        """TD target: just the reward for terminal one-step episodes, with an
        optional bootstrap term for study."""
        p = self._require_params()
        _s, g, _a, r, s_next = self._batch_arrays(batch)
        y = r.copy()
        if self.use_bootstrap:
            feats_next = self._features(s_next, g)
            a_next = p.actor_target(feats_next)
            q_next = p.critic_target(np.hstack([feats_next, a_next]))[:, 0]
            y = r + p.gamma_disc * q_next
        return y

    def critic_loss_and_grads(self, batch: list[Transition]):
        """Mean squared TD error and its exact parameter gradient.

        The L2 regularizer is applied separately in ``update``; this is the
        pure data term (what the finite-difference check verifies).
        """
        p = self._require_params()
        s, g, a, _r, _sn = self._batch_arrays(batch)
        y = self._targets(batch)
        pred, cache = p.critic.forward(np.hstack([self._features(s, g), a]))
        err = pred[:, 0] - y
        loss = float(np.mean(err**2))
        grad_out = (2.0 * err / len(batch))[:, None]
        grads, _ = p.critic.backward(cache, grad_out)
        return loss, grads

    def actor_objective_and_grads(self, batch: list[Transition]):
        """Mean critic value of the actor's own actions, and its ascent
        gradient chained through the critic's action input."""
        p = self._require_params()
        s, g, _a, _r, _sn = self._batch_arrays(batch)
        feats = self._features(s, g)
        a_pi, actor_cache = p.actor.forward(feats)
        q, critic_cache = p.critic.forward(np.hstack([feats, a_pi]))
        objective = float(np.mean(q))
        grad_q = np.full((len(batch), 1), 1.0 / len(batch))
        _, dx = p.critic.backward(critic_cache, grad_q)
        grad_a = dx[:, self.STATE_DIM + self.GOAL_DIM :]
        grads, _ = p.actor.backward(actor_cache, grad_a)
        return objective, grads

    def update(self, batch: list[Transition]) -> dict:
        """One critic step, one actor step, one target soft update."""
        if not batch:
            raise DataError("empty minibatch")
        p = self._require_params()
        loss, critic_grads = self.critic_loss_and_grads(batch)
        if self.critic_weight_decay > 0:
            for i in range(0, len(critic_grads), 2):  # weight matrices only
                critic_grads[i] = critic_grads[i] + self.critic_weight_decay * p.critic.params[i]
        p.critic_opt.step(p.critic.params, critic_grads)
        objective, actor_grads = self.actor_objective_and_grads(batch)
        # gradient ascent on the objective
        p.actor_opt.step(p.actor.params, [-g for g in actor_grads])
        soft_update(p.actor_target, p.actor, p.tau_soft)
        soft_update(p.critic_target, p.critic, p.tau_soft)
        if not (np.isfinite(loss) and np.isfinite(objective)):
            raise DivergedTrainingError(
                "non-finite training loss",
                diagnostics={
                    "critic_loss": loss,
                    "actor_objective": objective,
                    "actor_norm": float(np.linalg.norm(p.actor.get_flat())),
                    "critic_norm": float(np.linalg.norm(p.critic.get_flat())),
                },
            )
        return {"critic_loss": loss, "actor_objective": objective}


@dataclass
class CurriculumStage:
    serve_speed: float
    episodes: int


@dataclass
class EpisodeRecord:
    n: int  # global episode index
    stage_speed: float
    case: int
    reward: float
    d: float  # target distance for case 4, nan otherwise
    eta: float


@dataclass
class TrainResult:
    agent: DdpgAgent
    log: list[EpisodeRecord]
    buffer: ReplayBuffer
    migration_checks: list[tuple[float, float]] = field(default_factory=list)
    episodes_detail: list[dict] = field(default_factory=list)


def sample_target(rng: np.random.Generator,
                  x_range=(-1.1, -0.3), y_range=(-0.5, 0.5)) -> np.ndarray:
    return np.array([rng.uniform(*x_range), rng.uniform(*y_range)])


def train_curriculum(
    stages: list[CurriculumStage],
    env_cfg: EnvConfig,
    agent: DdpgAgent,
    reward_cfg: RewardConfig | None = None,
    sched: ExplorationSchedule | None = None,
    seed: int = 0,
    reward_mode: str = "cdta",
    buffer_strategy: str = "threshold",
    delta: float = 0.0,
    target_x_range=(-1.1, -0.3),
    target_y_range=(-0.5, 0.5),
    keep_detail: bool = False,
) -> TrainResult:
    """Drive the full curriculum: serve, act, strike, classify, learn.

    Stage-local episode counters feed both the reward weights and the
    exploration decay, so every speed stage replays the basic-to-advanced
    progression. At each stage boundary the replay buffer is discarded,
    retained, or threshold-migrated per ``buffer_strategy``.
    """
    if not stages:
        raise ConfigError("curriculum needs at least one stage")
    if reward_mode not in ("cdta", "simple"):
        raise ConfigError(f"unknown reward mode {reward_mode!r}")
    if buffer_strategy not in ("threshold", "retain", "discard"):
        raise ConfigError(f"unknown buffer strategy {buffer_strategy!r}")
    reward_cfg = reward_cfg or RewardConfig(h_net=env_cfg.net_height)
    sched = sched or ExplorationSchedule()
    rng = np.random.default_rng(seed)
    if not hasattr(agent, "params_"):
        agent.init_params(rng)
    buffer = ReplayBuffer(agent.buffer_capacity, rng)
    log: list[EpisodeRecord] = []
    detail: list[dict] = []
    migration_checks: list[tuple[float, float]] = []
    n_global = 0

    for stage_idx, stage in enumerate(stages):
        if stage_idx > 0:
            if buffer_strategy == "discard":
                buffer = ReplayBuffer(agent.buffer_capacity, rng)
            elif buffer_strategy == "threshold":
                buffer = migrate_buffer(buffer, delta)
                for tr in buffer.transitions:
                    migration_checks.append((tr.r, delta))
        stage_cfg = replace(env_cfg, serve_speed=stage.serve_speed)
        for n in range(stage.episodes):
            eta = exploration_noise(n, sched)
            served = serve(stage_cfg, rng)
            s_vec = served.hit_state.as_vector()
            g = sample_target(rng, target_x_range, target_y_range)
            a, quat = agent.act(s_vec[:6], g, eta, rng)
            out_state = strike(served.hit_state, quat, stage_cfg)
            if out_state is None:
                outcome = whiff_outcome(served.hit_state, stage_cfg)
            else:
                outcome = classify_landing(out_state, g, stage_cfg)
            if reward_mode == "cdta":
                r = cdta_reward(outcome, n, reward_cfg)
            else:
                r = simple_reward(outcome, reward_cfg)
            s_next = np.concatenate([outcome.f, outcome.contact_velocity])
            buffer.add(Transition(s_vec, g, a, r, s_next, n, stage.serve_speed))
            if len(buffer) >= agent.batch_size:
                for _ in range(agent.updates_per_episode):
                    agent.update(buffer.sample(agent.batch_size))
            log.append(EpisodeRecord(
                n=n_global, stage_speed=stage.serve_speed, case=outcome.case,
                reward=r, d=outcome.d if outcome.case == 4 else float("nan"),
                eta=eta,
            ))
            if keep_detail:
                detail.append({
                    "n": n_global,
                    "stage_speed": stage.serve_speed,
                    "s": s_vec.tolist(),
                    "g": g.tolist(),
                    "a": a.tolist(),
                    "case": outcome.case,
                    "f": outcome.f.tolist(),
                    "d": outcome.d,
                    "reward": r,
                })
            n_global += 1
    return TrainResult(agent=agent, log=log, buffer=buffer,
                       migration_checks=migration_checks, episodes_detail=detail)


def evaluate_policy(
    agent: DdpgAgent,
    env_cfg: EnvConfig,
    episodes: int,
    seed: int = 0,
    target_x_range=(-1.1, -0.3),
    target_y_range=(-0.5, 0.5),
) -> list[EpisodeRecord]:
    """Roll out the deterministic policy (no exploration, no learning)."""
    rng = np.random.default_rng(seed)
    reward_cfg = RewardConfig(h_net=env_cfg.net_height)
    records = []
    for n in range(episodes):
        served = serve(env_cfg, rng)
        s_vec = served.hit_state.as_vector()
        g = sample_target(rng, target_x_range, target_y_range)
        a, quat = agent.act(s_vec, g, 0.0, rng)
        out_state = strike(served.hit_state, quat, env_cfg)
        outcome = (whiff_outcome(served.hit_state, env_cfg) if out_state is None
                   else classify_landing(out_state, g, env_cfg))
        r = cdta_reward(outcome, n, reward_cfg)
        records.append(EpisodeRecord(
            n=n, stage_speed=env_cfg.serve_speed, case=outcome.case, reward=r,
            d=outcome.d if outcome.case == 4 else float("nan"), eta=0.0,
        ))
    return records


CHECKPOINT_MAGIC = b"AGP1"


def save_checkpoint(agent: DdpgAgent, path) -> None:
    """Versioned little-endian binary dump of the agent's parameters."""
    p = agent._require_params()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HH", 1, int(agent.use_bootstrap)))
        fh.write(struct.pack(
            "<IIII", agent.STATE_DIM, agent.GOAL_DIM, agent.ACTION_DIM, agent.hidden
        ))
        fh.write(struct.pack(
            "<6d", agent.actor_lr, agent.critic_lr, p.tau_soft, p.gamma_disc,
            p.max_rotation_deg, agent.base_tilt_deg,
        ))
        fh.write(np.asarray(p.base_quat, dtype="<f8").tobytes())
        fh.write(struct.pack("<II", p.actor_opt.t, p.critic_opt.t))
        for net in (p.actor, p.critic, p.actor_target, p.critic_target):
            for arr in net.params:
                fh.write(arr.astype("<f8").tobytes())
        for opt in (p.actor_opt, p.critic_opt):
            for arr in opt.m + opt.v:
                fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path) -> DdpgAgent:
    raw = open(path, "rb").read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"bad checkpoint magic {raw[:4]!r}")
    off = 4
    version, bootstrap = struct.unpack_from("<HH", raw, off)
    off += 4
    if version != 1:
        raise DataError(f"unsupported checkpoint version {version}")
    state_dim, goal_dim, action_dim, hidden = struct.unpack_from("<IIII", raw, off)
    off += 16
    actor_lr, critic_lr, tau, gamma_disc, max_rot, base_tilt = struct.unpack_from(
        "<6d", raw, off)
    off += 48
    base_quat = np.frombuffer(raw, "<f8", 4, off).copy()
    off += 32
    actor_t, critic_t = struct.unpack_from("<II", raw, off)
    off += 8
    if (state_dim, goal_dim, action_dim) != (
        DdpgAgent.STATE_DIM, DdpgAgent.GOAL_DIM, DdpgAgent.ACTION_DIM
    ):
        raise DataError("checkpoint dimensions do not match this build")
    agent = DdpgAgent(
        hidden=hidden, actor_lr=actor_lr, critic_lr=critic_lr, tau_soft=tau,
        gamma_disc=gamma_disc, use_bootstrap=bool(bootstrap),
        base_tilt_deg=base_tilt, max_rotation_deg=max_rot, random_state=0,
    )
    p = agent.init_params(np.random.default_rng(0))
    p.base_quat = base_quat

    def read_arrays(shapes):
        nonlocal off
        out = []
        for shape in shapes:
            size = int(np.prod(shape))
            out.append(np.frombuffer(raw, "<f8", size, off).reshape(shape).copy())
            off += size * 8
        return out

    for net in (p.actor, p.critic, p.actor_target, p.critic_target):
        net.params = read_arrays([q.shape for q in net.params])
    for opt, t in ((p.actor_opt, actor_t), (p.critic_opt, critic_t)):
        shapes = [q.shape for q in opt.m]
        opt.m = read_arrays(shapes)
        opt.v = read_arrays(shapes)
        opt.t = t
    if off != len(raw):
        raise DataError(f"checkpoint has {len(raw) - off} trailing bytes")
    return agent
