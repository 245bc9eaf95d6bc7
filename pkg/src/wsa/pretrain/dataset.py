"""Frame datasets gathered from random, scripted-expert or mixed play."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from ..env import SIZE, expert_policy, make_env
from ..errors import ConfigError, DataError

FORMAT = "wsa-frames/1"
POLICIES = ("random", "expert", "mixed")
TAGS = ("random", "expert")
FRAME_SHAPE = (3, SIZE, SIZE)


@dataclass
class FrameDataset:
    frames: np.ndarray          # [N, 3, 24, 24] float32
    episode_starts: np.ndarray  # strictly increasing, first entry 0
    episode_tags: list         # one of TAGS per episode
    env_id: str
    seed: int
    policy: str
    ball: np.ndarray            # [N, 2] true ball centre (x, y)
    player: np.ndarray          # [N, 2] true player paddle centre
    blocks: np.ndarray | None = None  # [N] remaining blocks (minibreakout)

    def __len__(self):
        return len(self.frames)

    @property
    def n_episodes(self):
        return len(self.episode_starts)

    @property
    def episode_ends(self):
        return np.append(self.episode_starts[1:], len(self))

    @property
    def episode_lengths(self):
        return self.episode_ends - self.episode_starts

    @property
    def episode_of(self):
        """Episode index of every frame."""
        return np.repeat(np.arange(self.n_episodes), self.episode_lengths)

    @property
    def tags(self):
        return np.repeat(np.asarray(self.episode_tags), self.episode_lengths)

    def tag_counts(self):
        t = self.tags
        return {tag: int(np.sum(t == tag)) for tag in TAGS}

    def stack(self, index, n_frames):
        """Observations made of the ``n_frames`` frames ending at each index.

        Frames before the start of an episode repeat its first frame, which
        is how the environment fills its stack at reset.
        """
        index = np.asarray(index)
        first = self.episode_starts[self.episode_of[index]]
        parts = [self.frames[np.maximum(index - k, first)] for k in range(n_frames - 1, -1, -1)]
        return np.concatenate(parts, axis=1)

    def successors(self):
        """Indices t whose frame t+1 belongs to the same episode."""
        t = np.arange(len(self) - 1)
        return t[self.episode_of[t] == self.episode_of[t + 1]]

    def digest(self):
        return hashlib.sha256(np.ascontiguousarray(self.frames, "<f4").tobytes()).hexdigest()[:16]


def collect_dataset(env_id: str, policy: str, n_frames: int, seed: int) -> FrameDataset:
    """Play whole episodes until ``n_frames`` frames are gathered.

    ``mixed`` alternates random and expert episodes, starting with random.
    The final episode is cut when the budget runs out.
    """
    if policy not in POLICIES:
        raise ConfigError(f"unknown collection policy {policy!r}; choose from {POLICIES}")
    if n_frames < 1:
        raise ConfigError("n_frames must be at least 1")
    env = make_env(env_id)
    rng = np.random.default_rng(seed)
    frames, ball, player, blocks = [], [], [], []
    starts, tags = [], []

    def record(frame, info):
        frames.append(frame)
        ball.append(info["ball"])
        player.append(info["player"])
        blocks.append(info.get("blocks", -1))

    while len(frames) < n_frames:
        tag = policy if policy != "mixed" else TAGS[len(starts) % 2]
        starts.append(len(frames))
        tags.append(tag)
        obs = env.reset(int(rng.integers(2**31 - 1)))
        record(obs[-3:], env.info())
        done = False
        while not done and len(frames) < n_frames:
            action = expert_policy(env) if tag == "expert" else int(rng.integers(env.n_actions))
            res = env.step(action)
            record(res.observation[-3:], res.info)
            done = res.done
    has_blocks = env_id == "minibreakout"
    return FrameDataset(np.stack(frames).astype(np.float32), np.asarray(starts, np.int64), tags,
                        env_id, int(seed), policy, np.asarray(ball, np.float64),
                        np.asarray(player, np.float64),
                        np.asarray(blocks, np.int64) if has_blocks else None)


def save_dataset(data: FrameDataset, path):
    os.makedirs(path, exist_ok=True)
    manifest = {
        "format": FORMAT, "env_id": data.env_id, "policy": data.policy, "seed": data.seed,
        "n_frames": len(data), "frame_shape": list(FRAME_SHAPE), "dtype": "f32-le",
        "episode_starts": data.episode_starts.tolist(), "episode_tags": list(data.episode_tags),
        "tag_counts": data.tag_counts(),
        "coords": {"ball": data.ball.tolist(), "player": data.player.tolist()},
        "blocks": None if data.blocks is None else data.blocks.tolist(),
    }
    blob = np.ascontiguousarray(data.frames, "<f4").tobytes()
    from ..harness.checkpoint import atomic_write  # local import keeps pretrain importable alone
    atomic_write(os.path.join(path, "frames.bin"), blob)
    atomic_write(os.path.join(path, "manifest.json"), (json.dumps(manifest, sort_keys=True) + "\n").encode())
    return path


def load_dataset(path) -> FrameDataset:
    try:
        with open(os.path.join(path, "manifest.json")) as fh:
            m = json.load(fh)
        with open(os.path.join(path, "frames.bin"), "rb") as fh:
            blob = fh.read()
    except FileNotFoundError as exc:
        raise DataError(f"dataset {path} is missing {os.path.basename(exc.filename)}") from exc
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    if m.get("format") != FORMAT:
        raise DataError(f"{path}: unsupported dataset format {m.get('format')!r}")
    n = m["n_frames"]
    if len(blob) != n * int(np.prod(FRAME_SHAPE)) * 4:
        raise DataError(f"{path}: frame blob has {len(blob)} bytes, expected {n} frames")
    frames = np.frombuffer(blob, "<f4").reshape((n,) + FRAME_SHAPE).astype(np.float32)
    blocks = m.get("blocks")
    return FrameDataset(frames, np.asarray(m["episode_starts"], np.int64), list(m["episode_tags"]),
                        m["env_id"], m["seed"], m["policy"], np.asarray(m["coords"]["ball"], np.float64),
                        np.asarray(m["coords"]["player"], np.float64),
                        None if blocks is None else np.asarray(blocks, np.int64))
