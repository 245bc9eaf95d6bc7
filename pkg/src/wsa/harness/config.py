"""Serializable run configuration."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from ..env import GAMES, Variation
from ..errors import ConfigError
from ..rl import AgentSpec, DQNConfig, PPOConfig, EVAL_SEEDS

EXPERIMENTS = ("train", "scale")


@dataclass
class EvalSettings:
    every: int = 50_000          # env steps between in-training evaluations (0: final only)
    episodes: int = 2            # per seed, during training
    final_episodes: int = 50     # per seed, at the end of the run
    seeds: list = field(default_factory=lambda: list(EVAL_SEEDS))
    max_steps: int | None = None
    patience: int | None = None  # early stopping: eval points without improvement

    def __post_init__(self):
        if self.every < 0 or self.episodes < 1 or self.final_episodes < 1:
            raise ConfigError("eval every must be >= 0 and episode counts >= 1")
        if not self.seeds:
            raise ConfigError("evaluation needs at least one seed")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("early-stopping patience must be at least 1")
        self.seeds = [int(s) for s in self.seeds]


@dataclass
class RunConfig:
    experiment: str = "train"
    env: str = "minipong"
    variation: str = ""
    agent: AgentSpec = field(default_factory=AgentSpec)
    ppo: dict = field(default_factory=dict)
    dqn: dict = field(default_factory=dict)
    encoders: str | None = None
    out: str = "runs/default"
    seed: int = 0
    total_steps: int = 300_000
    eval: EvalSettings = field(default_factory=EvalSettings)
    schedule: list | None = None
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.env not in GAMES:
            raise ConfigError(f"unknown environment {self.env!r}; choose from {sorted(GAMES)}")
        if self.total_steps <= 0:
            raise ConfigError("total_steps must be positive")
        self.parsed_variation.validate_for(self.env)
        # build once so bad overrides fail at load time, not mid-run
        self.ppo_config()
        self.dqn_config()

    @property
    def parsed_variation(self):
        return Variation.parse(self.variation)

    def ppo_config(self):
        return _override(PPOConfig, self.ppo, total_steps=self.total_steps)

    def dqn_config(self):
        return _override(DQNConfig, self.dqn, total_steps=self.total_steps)

    def to_dict(self):
        d = asdict(self)
        d["agent"] = self.agent.to_dict()
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        _reject_unknown(cls, d, "run config")
        if isinstance(d.get("agent"), dict):
            _reject_unknown(AgentSpec, d["agent"], "agent")
            d["agent"] = AgentSpec(**d["agent"])
        if isinstance(d.get("eval"), dict):
            _reject_unknown(EvalSettings, d["eval"], "eval")
            d["eval"] = EvalSettings(**d["eval"])
        return cls(**d)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                d = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path} must hold a JSON object")
        return cls.from_dict(d)


def _reject_unknown(cls, d, what):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown {what} keys: {unknown}")


def _override(cls, overrides, **defaults):
    _reject_unknown(cls, overrides, cls.__name__)
    kwargs = dict(defaults)
    kwargs.update(overrides)
    return cls(**kwargs)
