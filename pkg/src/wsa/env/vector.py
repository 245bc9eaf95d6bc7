from __future__ import annotations

import numpy as np

from .games import make_env
from .variation import Variation


class VecEnv:
    """N independent copies of one game stepped in lockstep with auto-reset.

    Each copy draws its episode seeds from its own generator, so the
    trajectory of copy ``i`` depends only on ``(seed, i)``.
    """

    def __init__(self, game_id: str, n_envs: int, seed: int, variation: Variation | None = None,
                 max_steps=None):
        kwargs = {} if max_steps is None else {"max_steps": max_steps}
        self.envs = [make_env(game_id, **kwargs) for _ in range(n_envs)]
        self.game_id = game_id
        self.variation = variation or Variation()
        self._seeders = [np.random.default_rng([seed, i]) for i in range(n_envs)]
        self.episode_returns = np.zeros(n_envs)
        self.episode_lengths = np.zeros(n_envs, dtype=np.int64)
        self.finished = []  # (return, length) of every completed episode

    @property
    def n_envs(self):
        return len(self.envs)

    @property
    def n_actions(self):
        return self.envs[0].n_actions

    def _reset_one(self, i):
        episode_seed = int(self._seeders[i].integers(2**31 - 1))
        return self.envs[i].reset(episode_seed, self.variation)

    def reset(self):
        self.episode_returns[:] = 0
        self.episode_lengths[:] = 0
        return np.stack([self._reset_one(i) for i in range(self.n_envs)])

    def step(self, actions):
        obs, rewards, dones, infos = [], np.zeros(self.n_envs), np.zeros(self.n_envs, bool), []
        for i, (env, a) in enumerate(zip(self.envs, actions)):
            res = env.step(int(a))
            rewards[i], dones[i] = res.reward, res.done
            self.episode_returns[i] += res.reward
            self.episode_lengths[i] += 1
            info = res.info
            if res.done:
                info["episode_return"] = float(self.episode_returns[i])
                info["episode_length"] = int(self.episode_lengths[i])
                self.finished.append((info["episode_return"], info["episode_length"]))
                self.episode_returns[i] = 0
                self.episode_lengths[i] = 0
                obs.append(self._reset_one(i))
            else:
                obs.append(res.observation)
            infos.append(info)
        return np.stack(obs), rewards, dones, infos
