"""Greedy evaluation over a fixed seed set."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env import Variation, make_env

EVAL_SEEDS = (47695, 32558, 94088, 71782, 66638)


@dataclass
class EvalResult:
    mean: float
    std: float
    returns: np.ndarray      # [n_seeds, episodes_per_seed]
    lengths: np.ndarray
    seeds: tuple

    @property
    def per_seed(self):
        return self.returns.mean(axis=1)

    def to_dict(self):
        return {"mean": self.mean, "std": self.std, "seeds": list(self.seeds),
                "per_seed_mean": self.per_seed.tolist(), "returns": self.returns.tolist(),
                "lengths": self.lengths.tolist()}


def episode_seeds(seed, episodes):
    return [int(s) for s in np.random.default_rng(seed).integers(2**31 - 1, size=episodes)]


def evaluate_policy(agent, game_id, seeds=EVAL_SEEDS, episodes_per_seed=10, variation=None,
                    max_steps=None, batch=64):
    """Mean and std of greedy returns over ``episodes_per_seed`` episodes per seed.

    Episodes run in lockstep batches; every agent layer treats rows
    independently, so the outcome does not depend on ``batch``.
    """
    variation = variation or Variation()
    seeds = tuple(int(s) for s in seeds)
    jobs = [(i, j, s) for i, seed in enumerate(seeds) for j, s in enumerate(episode_seeds(seed, episodes_per_seed))]
    returns = np.zeros((len(seeds), episodes_per_seed))
    lengths = np.zeros((len(seeds), episodes_per_seed), np.int64)
    kwargs = {} if max_steps is None else {"max_steps": max_steps}
    for start in range(0, len(jobs), batch):
        chunk = jobs[start:start + batch]
        envs = [make_env(game_id, **kwargs) for _ in chunk]
        obs = [env.reset(s, variation) for env, (_, _, s) in zip(envs, chunk)]
        live = list(range(len(chunk)))
        while live:
            actions = agent.greedy(np.stack([obs[k] for k in live]))
            still = []
            for k, a in zip(live, actions):
                res = envs[k].step(int(a))
                i, j, _ = chunk[k]
                returns[i, j] += res.reward
                lengths[i, j] += 1
                obs[k] = res.observation
                if not res.done:
                    still.append(k)
            live = still
    flat = returns.reshape(-1)
    return EvalResult(float(flat.mean()), float(flat.std()), returns, lengths, seeds)
