"""Run configuration: strict JSON parsing with unknown keys rejected.

Silent typos in hyperparameter names are a classic way to invalidate a
training run, so every section validates its keys against the dataclass
(or constructor) it feeds.
"""

from __future__ import annotations

import dataclasses
import inspect
import json
from dataclasses import dataclass, field
from pathlib import Path

from .detect import DetectConfig
from .env import EnvConfig
from .errors import ConfigError
from .learner import CurriculumStage, DdpgAgent, ExplorationSchedule, RewardConfig


def dataclass_from_dict(cls, data: dict, section: str):
    """Instantiate a dataclass from a dict, rejecting unknown keys and
    coercing JSON lists into tuples where the default is a tuple."""
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        f = fields[key]
        default_is_tuple = isinstance(f.default, tuple)
        if default_is_tuple and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {section!r}: {exc}") from exc


_AGENT_KEYS = {
    name
    for name in inspect.signature(DdpgAgent.__init__).parameters
    if name != "self"
}


@dataclass
class TrainSpec:
    stages: list[CurriculumStage] = field(
        default_factory=lambda: [CurriculumStage(3.0, 800), CurriculumStage(5.0, 900)]
    )
    delta: float = 0.0
    buffer_strategy: str = "threshold"
    reward_mode: str = "cdta"
    target_x_range: tuple[float, float] = (-1.1, -0.3)
    target_y_range: tuple[float, float] = (-0.5, 0.5)

    def __post_init__(self):
        if self.buffer_strategy not in ("threshold", "retain", "discard"):
            raise ConfigError(f"unknown buffer_strategy {self.buffer_strategy!r}")
        if self.reward_mode not in ("cdta", "simple"):
            raise ConfigError(f"unknown reward_mode {self.reward_mode!r}")
        if not self.stages:
            raise ConfigError("train.stages must not be empty")


def _parse_train(data: dict) -> TrainSpec:
    data = dict(data)
    stages_raw = data.pop("stages", None)
    spec = dataclass_from_dict(TrainSpec, data, "train")
    if stages_raw is not None:
        stages = []
        for i, st in enumerate(stages_raw):
            if not isinstance(st, dict) or set(st) - {"serve_speed", "episodes"}:
                raise ConfigError(f"train.stages[{i}] needs only serve_speed/episodes")
            stages.append(CurriculumStage(float(st["serve_speed"]), int(st["episodes"])))
        spec.stages = stages
    return spec


@dataclass
class RunConfig:
    seed: int = 0
    window_us: int = 2000
    detect: DetectConfig = field(default_factory=DetectConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    exploration: ExplorationSchedule = field(default_factory=ExplorationSchedule)
    agent: dict = field(default_factory=dict)
    train: TrainSpec = field(default_factory=TrainSpec)

    def make_agent(self) -> DdpgAgent:
        return DdpgAgent(**self.agent)


_SECTIONS = {"seed", "window_us", "detect", "env", "reward", "exploration", "agent", "train"}


def run_config_from_dict(data: dict) -> RunConfig:
    unknown = set(data) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    cfg = RunConfig()
    if "seed" in data:
        if not isinstance(data["seed"], int):
            raise ConfigError("seed must be an integer")
        cfg.seed = data["seed"]
    if "window_us" in data:
        if not isinstance(data["window_us"], int) or data["window_us"] <= 0:
            raise ConfigError("window_us must be a positive integer")
        cfg.window_us = data["window_us"]
    if "detect" in data:
        cfg.detect = dataclass_from_dict(DetectConfig, data["detect"], "detect")
    if "env" in data:
        cfg.env = dataclass_from_dict(EnvConfig, data["env"], "env")
    if "reward" in data:
        cfg.reward = dataclass_from_dict(RewardConfig, data["reward"], "reward")
    if "exploration" in data:
        cfg.exploration = dataclass_from_dict(
            ExplorationSchedule, data["exploration"], "exploration")
    if "agent" in data:
        if not isinstance(data["agent"], dict):
            raise ConfigError("section 'agent' must be an object")
        unknown = set(data["agent"]) - _AGENT_KEYS
        if unknown:
            raise ConfigError(f"unknown keys in 'agent': {sorted(unknown)}")
        cfg.agent = dict(data["agent"])
    if "train" in data:
        cfg.train = _parse_train(data["train"])
    return cfg


def load_run_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return run_config_from_dict(data)
