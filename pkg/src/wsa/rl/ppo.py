"""Proximal policy optimisation on top of any agent representation."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, TrainingError
from ..numerics import Adam, autodiff as ad, backward, clip_grad_norm
from .buffers import RolloutBuffer, normalize_advantages


@dataclass
class PPOConfig:
    n_envs: int = 8
    n_steps: int = 128
    n_epochs: int = 4
    batch: int = 256
    total_steps: int = 300_000
    lr: float = 2.5e-4
    clip: float = 0.1
    vf_coef: float = 0.5
    ent_coef: float = 0.01
    gamma: float = 0.99
    gae_lambda: float = 0.95
    max_grad_norm: float = 0.5
    normalize_advantage: bool = True

    def __post_init__(self):
        for name in ("n_envs", "n_steps", "n_epochs", "batch", "total_steps", "lr", "max_grad_norm"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"PPO {name} must be positive, got {getattr(self, name)!r}")
        if not 0.0 < self.clip < 1.0:
            raise ConfigError(f"PPO clip must lie in (0, 1), got {self.clip}")
        if not (0.0 < self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ConfigError("gamma must lie in (0, 1] and gae_lambda in [0, 1]")
        if self.vf_coef < 0 or self.ent_coef < 0:
            raise ConfigError("loss coefficients must be non-negative")

    @property
    def rollout_size(self):
        return self.n_envs * self.n_steps

    def to_dict(self):
        return asdict(self)


def ppo_loss(agent, mb, cfg: PPOConfig):
    """Clipped surrogate + value regression - entropy bonus for one minibatch.

    Returns the scalar loss node and a dict of float diagnostics.
    """
    (logits, values), _ = agent.outputs(mb["stored"])
    dt = logits.data.dtype
    adv = np.asarray(mb["advantages"], np.float64)
    if cfg.normalize_advantage and len(adv) > 1:
        adv = normalize_advantages(adv)
    adv = adv.astype(dt)
    logp_all = ad.log_softmax(logits, axis=1)
    logp = ad.pick(logp_all, mb["actions"])
    ratio = ad.exp(logp - np.asarray(mb["log_probs"], dt))
    surr = ad.minimum(ratio * adv, ad.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv)
    pg_loss = -ad.mean(surr)
    v = ad.reshape(values, (-1,))
    vf_loss = ad.mean(ad.square(v - np.asarray(mb["returns"], dt)))
    entropy = -ad.mean(ad.sum(ad.exp(logp_all) * logp_all, axis=1))
    loss = pg_loss + cfg.vf_coef * vf_loss - cfg.ent_coef * entropy
    r = ratio.data
    stats = {"loss": float(loss.data), "pg_loss": float(pg_loss.data), "vf_loss": float(vf_loss.data),
             "entropy": float(entropy.data), "approx_kl": float(np.mean((r - 1.0) - np.log(r))),
             "clip_frac": float(np.mean(np.abs(r - 1.0) > cfg.clip))}
    return loss, stats


def ppo_update(agent, buffer: RolloutBuffer, cfg: PPOConfig, optimizer, rng):
    """``n_epochs`` passes of shuffled minibatch steps.  Returns mean diagnostics."""
    rows = []
    for epoch in range(cfg.n_epochs):
        for mb in buffer.minibatches(cfg.batch, rng):
            loss, stats = ppo_loss(agent, mb, cfg)
            if not np.isfinite(stats["loss"]):
                raise TrainingError(f"non-finite PPO loss at epoch {epoch}: "
                                    + ", ".join(f"{k}={v:.4g}" for k, v in stats.items()))
            grads = backward(loss)
            stats["grad_norm"] = clip_grad_norm(grads, cfg.max_grad_norm)
            if not np.isfinite(stats["grad_norm"]):
                raise TrainingError(f"non-finite gradient norm at epoch {epoch} (loss {stats['loss']:.4g})")
            optimizer.step(grads)
            rows.append(stats)
    return {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}


class PPOTrainer:
    """Collect-then-update loop over a vectorised environment.

    ``callback(trainer, stats)`` runs after every update and may change
    the agent (e.g. add a model) or return True to stop early.
    """

    def __init__(self, agent, venv, cfg: PPOConfig, seed=0):
        if venv.n_envs != cfg.n_envs:
            raise ConfigError(f"environment has {venv.n_envs} copies but PPO expects {cfg.n_envs}")
        self.agent = agent
        self.venv = venv
        self.cfg = cfg
        self.optimizer = Adam(cfg.lr)
        self.rng = np.random.default_rng([seed, 2])
        self.obs = venv.reset()
        self.global_step = 0
        self.updates = 0
        self.seconds = 0.0
        self.episode_returns = []

    def collect(self):
        cfg = self.cfg
        buf = RolloutBuffer(cfg.n_steps, cfg.n_envs)
        for _ in range(cfg.n_steps):
            actions, logp, values, stored = self.agent.act(self.obs, "sample")
            obs, rewards, dones, infos = self.venv.step(actions)
            buf.add(stored, actions, logp, rewards, values, dones)
            for info in infos:
                if "episode_return" in info:
                    self.episode_returns.append(info["episode_return"])
            self.obs = obs
            self.global_step += cfg.n_envs
        _, last_value = self.agent.policy(self.agent.features.precompute(self.obs))
        buf.finish(last_value, cfg.gamma, cfg.gae_lambda)
        return buf

    def step(self):
        t0 = time.perf_counter()
        buf = self.collect()
        stats = ppo_update(self.agent, buf, self.cfg, self.optimizer, self.rng)
        self.updates += 1
        self.seconds += time.perf_counter() - t0
        recent = self.episode_returns[-20:]
        stats.update(step=self.global_step, update=self.updates, seconds=self.seconds,
                     episodes=len(self.episode_returns),
                     train_return=float(np.mean(recent)) if recent else float("nan"))
        return stats

    def train(self, total_steps=None, callback=None):
        total = self.cfg.total_steps if total_steps is None else total_steps
        history = []
        while self.global_step < total:
            stats = self.step()
            history.append(stats)
            if callback is not None and callback(self, stats):
                break
        return history
