"""Deep Q-learning with a target network, used as a second learner."""
from __future__ import annotations

import copy
import time
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, TrainingError
from ..numerics import Adam, autodiff as ad, backward, clip_grad_norm
from .buffers import ReplayBuffer


@dataclass
class DQNConfig:
    capacity: int = 100_000
    target_update: int = 1000
    batch: int = 32
    lr: float = 1e-4
    learning_starts: int = 100_000
    train_freq: int = 4
    gradient_steps: int = 1
    exploration_fraction: float = 0.1
    exploration_initial: float = 1.0
    exploration_final: float = 0.01
    gamma: float = 0.99
    total_steps: int = 300_000
    max_grad_norm: float = 10.0

    def __post_init__(self):
        for name in ("capacity", "target_update", "batch", "lr", "train_freq", "gradient_steps",
                     "total_steps", "max_grad_norm"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"DQN {name} must be positive, got {getattr(self, name)!r}")
        if self.learning_starts < 0:
            raise ConfigError("learning_starts must be non-negative")
        if not 0.0 < self.exploration_fraction <= 1.0:
            raise ConfigError("exploration_fraction must lie in (0, 1]")
        if not 0.0 <= self.exploration_final <= self.exploration_initial <= 1.0:
            raise ConfigError("need 0 <= exploration_final <= exploration_initial <= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")

    def epsilon(self, step):
        """Linear decay over the first ``exploration_fraction`` of training, then flat."""
        horizon = self.exploration_fraction * self.total_steps
        frac = min(1.0, step / horizon)
        return self.exploration_initial + frac * (self.exploration_final - self.exploration_initial)

    def to_dict(self):
        return asdict(self)


def make_target(agent):
    """Frozen deep copy of ``agent`` used for bootstrap targets."""
    target = copy.deepcopy(agent)
    target.freeze()
    return target


def sync_target(agent, target):
    """Copy online parameters into ``target``; rebuilds it if the structure changed."""
    online = list(agent.named_parameters())
    frozen = list(target.named_parameters())
    if [n for n, _ in online] != [n for n, _ in frozen] or any(p.shape != q.shape for (_, p), (_, q) in zip(online, frozen)):
        return make_target(agent)
    for (_, p), (_, q) in zip(online, frozen):
        q.data = p.data.copy()
    return target


def td_targets(target, next_obs, rewards, dones, gamma):
    """``r + gamma * (1 - done) * max_a Q_target(s', a)`` as an array."""
    q_next = target.head(target.features.represent(target.features.precompute(next_obs)).R).data
    return np.asarray(rewards, np.float64) + gamma * (1.0 - np.asarray(dones, np.float64)) * q_next.max(axis=1)


def dqn_loss(agent, obs, actions, y):
    q = agent.head(agent.features.represent(agent.features.precompute(obs)).R)
    q_a = ad.pick(q, np.asarray(actions))
    return ad.mean(ad.square(q_a - np.asarray(y, q.data.dtype)))


def dqn_update(agent, target, batch, cfg: DQNConfig, optimizer):
    obs, actions, rewards, next_obs, dones = batch
    y = td_targets(target, next_obs, rewards, dones, cfg.gamma)
    loss = dqn_loss(agent, obs, actions, y)
    value = float(loss.data)
    if not np.isfinite(value):
        raise TrainingError(f"non-finite DQN loss (mean target {float(np.mean(y)):.4g})")
    grads = backward(loss)
    norm = clip_grad_norm(grads, cfg.max_grad_norm)
    optimizer.step(grads)
    return {"loss": value, "grad_norm": norm, "q_target": float(np.mean(y))}


class DQNTrainer:
    """Single-environment epsilon-greedy loop with replay and a target network."""

    def __init__(self, agent, venv, cfg: DQNConfig, seed=0):
        if venv.n_envs != 1:
            raise ConfigError("the DQN loop steps a single environment")
        self.agent = agent
        self.target = make_target(agent)
        self.venv = venv
        self.cfg = cfg
        self.optimizer = Adam(cfg.lr)
        self.replay = ReplayBuffer(cfg.capacity, seed=seed)
        self.rng = np.random.default_rng([seed, 3])
        self.obs = venv.reset()
        self.first = True
        self.global_step = 0
        self.updates = 0
        self.syncs = 0
        self.seconds = 0.0
        self.episode_returns = []
        self.last = {}

    def step(self):
        cfg = self.cfg
        if self.rng.random() < cfg.epsilon(self.global_step):
            action = int(self.rng.integers(self.agent.n_actions))
        else:
            action = int(self.agent.greedy(self.obs)[0])
        obs, rewards, dones, infos = self.venv.step([action])
        self.replay.add(self.obs[0], action, rewards[0], dones[0], self.first)
        if "episode_return" in infos[0]:
            self.episode_returns.append(infos[0]["episode_return"])
        self.first = bool(dones[0])
        self.obs = obs
        self.global_step += 1
        if self.global_step > cfg.learning_starts and self.global_step % cfg.train_freq == 0 and len(self.replay) >= 2:
            for _ in range(cfg.gradient_steps):
                self.last = dqn_update(self.agent, self.target, self.replay.sample(cfg.batch), cfg, self.optimizer)
                self.updates += 1
        if self.global_step % cfg.target_update == 0:
            self.target = sync_target(self.agent, self.target)
            self.syncs += 1

    def train(self, total_steps=None, callback=None, log_every=1000):
        total = self.cfg.total_steps if total_steps is None else total_steps
        history = []
        t0 = time.perf_counter()
        while self.global_step < total:
            self.step()
            if self.global_step % log_every == 0 or self.global_step >= total:
                recent = self.episode_returns[-20:]
                stats = dict(self.last, step=self.global_step, update=self.updates,
                             epsilon=self.cfg.epsilon(self.global_step),
                             seconds=self.seconds + time.perf_counter() - t0, episodes=len(self.episode_returns),
                             train_return=float(np.mean(recent)) if recent else float("nan"))
                history.append(stats)
                if callback is not None and callback(self, stats):
                    break
        self.seconds += time.perf_counter() - t0
        return history
