"""Rollout storage, generalized advantage estimation and the DQN replay."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError, StateError
from ..fusion import Views


def gae_compute(rewards, values, dones, last_value, gamma, lam):
    """Advantages and returns along the leading (time) axis.

    ``dones[t]`` marks that the transition at step t ended its episode, so
    neither the bootstrap value nor later advantages flow back across it.
    Extra trailing axes (parallel envs) are handled elementwise.
    """
    rewards = np.asarray(rewards, np.float64)
    values = np.asarray(values, np.float64)
    nonterminal = 1.0 - np.asarray(dones, np.float64)
    adv = np.zeros_like(rewards)
    next_value = np.asarray(last_value, np.float64)
    running = np.zeros_like(next_value)
    for t in range(len(rewards) - 1, -1, -1):
        delta = rewards[t] + gamma * next_value * nonterminal[t] - values[t]
        running = delta + gamma * lam * nonterminal[t] * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def normalize_advantages(adv, eps=1e-8):
    adv = np.asarray(adv, np.float64)
    return (adv - adv.mean()) / (adv.std() + eps)


def concat_stored(items):
    """Join per-step stored features (arrays or Views) along the batch axis."""
    first = items[0]
    if isinstance(first, Views):
        context = None if first.context is None else np.concatenate([v.context for v in items])
        return Views(context, {i: np.concatenate([v.models[i] for v in items]) for i in first.models})
    return np.concatenate(items)


def take_stored(stored, index):
    return stored.take(index) if isinstance(stored, Views) else stored[index]


class RolloutBuffer:
    """One PPO rollout of ``n_steps`` x ``n_envs`` transitions.

    Flattened index ``t * n_envs + e`` addresses step t of env e.
    """

    def __init__(self, n_steps, n_envs):
        self.n_steps = n_steps
        self.n_envs = n_envs
        shape = (n_steps, n_envs)
        self.actions = np.zeros(shape, np.int64)
        self.log_probs = np.zeros(shape)
        self.rewards = np.zeros(shape)
        self.values = np.zeros(shape)
        self.dones = np.zeros(shape)
        self.advantages = None
        self.returns = None
        self._stored = []
        self.stored = None

    @property
    def pos(self):
        return len(self._stored)

    @property
    def full(self):
        return self.pos == self.n_steps

    def add(self, stored, actions, log_probs, rewards, values, dones):
        if self.full:
            raise StateError("rollout buffer is full")
        t = self.pos
        self.actions[t] = actions
        self.log_probs[t] = log_probs
        self.rewards[t] = rewards
        self.values[t] = values
        self.dones[t] = dones
        self._stored.append(stored)

    def finish(self, last_value, gamma, lam):
        if not self.full:
            raise StateError(f"rollout buffer holds {self.pos} of {self.n_steps} steps")
        self.advantages, self.returns = gae_compute(self.rewards, self.values, self.dones, last_value, gamma, lam)
        self.stored = concat_stored(self._stored)

    def minibatches(self, batch, rng):
        if self.advantages is None:
            raise StateError("advantages have not been computed")
        n = self.n_steps * self.n_envs
        order = rng.permutation(n)
        flat = lambda a: a.reshape(-1)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            yield {"stored": take_stored(self.stored, idx), "actions": flat(self.actions)[idx],
                   "log_probs": flat(self.log_probs)[idx], "advantages": flat(self.advantages)[idx],
                   "returns": flat(self.returns)[idx], "values": flat(self.values)[idx]}


class ReplayBuffer:
    """FIFO replay for a single environment stream.

    Only the newest frame of each observation is kept; a stacked
    observation is rebuilt from the preceding slots of the same episode
    (the first observation of an episode repeats its frame, matching the
    environment).  This keeps a 100k buffer within a few hundred MB.
    """

    def __init__(self, capacity, frame_shape=(3, 24, 24), n_frames=4, seed=0):
        if capacity < 2:
            raise ConfigError("replay capacity must be at least 2")
        self.capacity = capacity
        self.frame_shape = tuple(frame_shape)
        self.n_frames = n_frames
        self.rng = np.random.default_rng(seed)
        self.frames = None
        self.actions = np.zeros(capacity, np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity, bool)
        self.first = np.zeros(capacity, bool)
        self.size = 0
        self.next = 0  # slot the next add writes
        self._chunk = min(capacity, 4096)

    def __len__(self):
        return self.size

    def _grow(self, need):
        have = 0 if self.frames is None else len(self.frames)
        if need <= have:
            return
        new = min(self.capacity, max(need, have + self._chunk))
        frames = np.zeros((new, *self.frame_shape), np.float32)
        if self.frames is not None:
            frames[:have] = self.frames
        self.frames = frames

    def add(self, obs, action, reward, done, first):
        """Store transition ``(obs, action, reward, done)``; ``first`` marks a reset observation."""
        c = self.frame_shape[0]
        self._grow(self.next + 1)
        slot = self.next
        self.frames[slot] = np.asarray(obs, np.float32)[-c:]
        self.actions[slot] = action
        self.rewards[slot] = reward
        self.dones[slot] = done
        self.first[slot] = first
        self.next = (slot + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    @property
    def oldest(self):
        return self.next if self.size == self.capacity else 0

    def _age(self, slot):
        return (slot - self.oldest) % self.capacity

    def observation(self, slot):
        parts = []
        cur = slot
        for _ in range(self.n_frames):
            parts.append(self.frames[cur])
            if not self.first[cur]:
                cur = (cur - 1) % self.capacity
        return np.concatenate(parts[::-1])

    def _valid(self, slot):
        newest = (self.next - 1) % self.capacity
        if slot == newest and not self.dones[slot]:
            return False  # successor not stored yet
        # history frames would reach into evicted slots
        cur, age = slot, self._age(slot)
        for k in range(self.n_frames - 1):
            if self.first[cur]:
                return True
            if age - k <= 0:
                return False
            cur = (cur - 1) % self.capacity
        return True

    def sample(self, batch):
        """Uniform minibatch: (obs, actions, rewards, next_obs, dones)."""
        if self.size < 2:
            raise StateError("replay buffer needs at least two transitions")
        picked = []
        while len(picked) < batch:
            cand = self.rng.integers(self.size, size=batch - len(picked))
            slots = (self.oldest + cand) % self.capacity
            picked.extend(int(s) for s in slots if self._valid(int(s)))
        idx = np.array(picked)
        obs = np.stack([self.observation(s) for s in idx])
        nxt = np.stack([obs_i if d else self.observation((s + 1) % self.capacity)
                        for s, d, obs_i in zip(idx, self.dones[idx], obs)])
        return obs, self.actions[idx], self.rewards[idx], nxt, self.dones[idx].astype(np.float64)
