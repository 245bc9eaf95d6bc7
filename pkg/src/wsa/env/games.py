"""Two deterministic 24x24 arcade games with stacked RGB observations.

All randomness (serve positions, bounce jitter) comes from a generator
seeded at ``reset``, so a seed, a variation and an action script fully
determine a trajectory.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, StateError
from .variation import PALETTE, Variation

SIZE = 24
N_STACK = 4
STEP_CAP = 1000
BALL = 2

BALL_COLOR = np.array([0.85, 0.85, 0.85], np.float32)
PLAYER_COLOR = np.array([1.0, 0.6, 0.2], np.float32)
OPPONENT_COLOR = np.array([0.55, 0.9, 0.55], np.float32)
BLOCK_ROW_COLORS = np.array([
    [0.9, 0.35, 0.35],
    [0.9, 0.65, 0.3],
    [0.8, 0.8, 0.3],
], np.float32)


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


class ArcadeEnv:
    game_id = ""
    action_names: tuple = ()

    def __init__(self, max_steps=STEP_CAP):
        self.max_steps = max_steps
        self.variation = Variation()
        self.rng = None
        self.done = True
        self.started = False
        self.steps = 0
        self._frames = []

    @property
    def n_actions(self):
        return len(self.action_names)

    def apply_variation(self, variation: Variation):
        """Switch palette / opponent behaviour.  Only legal between episodes."""
        if self.started and not self.done:
            raise StateError("variations can only change at an episode boundary")
        variation.validate_for(self.game_id)
        self.variation = variation
        return self

    def reset(self, seed: int, variation: Variation | None = None):
        self.apply_variation(self.variation if variation is None else variation)
        self.rng = np.random.default_rng(seed)
        self.steps = 0
        self.done = False
        self.started = True
        self._reset_state()
        frame = self.render()
        self._frames = [frame] * N_STACK
        return self.observation()

    def observation(self):
        return np.concatenate(self._frames, axis=0)

    def step(self, action: int) -> StepResult:
        if not self.started:
            raise StateError("step() called before reset()")
        if self.done:
            raise StateError("episode is over; call reset()")
        action = int(action)
        if not 0 <= action < self.n_actions:
            raise ConfigError(f"action {action} outside [0, {self.n_actions})")
        reward, terminal = self._advance(action)
        self.steps += 1
        truncated = self.steps >= self.max_steps and not terminal
        self.done = terminal or truncated
        self._frames = self._frames[1:] + [self.render()]
        info = self.info()
        info["truncated"] = truncated
        return StepResult(self.observation(), float(reward), self.done, info)

    def _paint(self, frame, x0, y0, w, h, color):
        xa, ya = max(int(x0), 0), max(int(y0), 0)
        xb, yb = min(int(x0) + w, SIZE), min(int(y0) + h, SIZE)
        if xa < xb and ya < yb:
            frame[:, ya:yb, xa:xb] = color[:, None, None]

    def _player_color(self):
        cp = self.variation.player_color
        return PLAYER_COLOR if cp is None else PALETTE[cp]


class MiniPong(ArcadeEnv):
    """Player paddle on the right, proportional-tracking opponent on the left.

    First side to 5 points ends the episode; reward is +1 / -1 per point.
    """

    game_id = "minipong"
    action_names = ("noop", "up", "down")
    PADDLE = 5
    PLAYER_X = 22
    OPPONENT_X = 1
    PLAYER_SPEED = 1.2
    BALL_SPEED = 1.0
    OPPONENT_SPEED = 0.8 * BALL_SPEED
    OPPONENT_GAIN = 0.25
    MAX_VY = 1.25
    JITTER = 0.3
    # outgoing vertical speed keeps the incoming one, so rallies steepen
    CARRY = 1.0
    ANGLE = 1.25
    WIN_SCORE = 5

    def _reset_state(self):
        self.player_y = (SIZE - self.PADDLE) / 2.0
        self.opponent_y = (SIZE - self.PADDLE) / 2.0
        self.score = [0, 0]
        self._serve()

    def _serve(self):
        self.ball_x = (SIZE - BALL) / 2.0
        self.ball_y = float(self.rng.uniform(6.0, SIZE - BALL - 6.0))
        self.vx = self.BALL_SPEED * (1.0 if self.rng.random() < 0.5 else -1.0)
        self.vy = float(self.rng.uniform(-0.6, 0.6))
        self.enemy_awake = not self.variation.lazy_enemy

    def _bounce(self, paddle_y):
        offset = (self.ball_y + BALL / 2.0) - (paddle_y + self.PADDLE / 2.0)
        vy = self.CARRY * self.vy + np.clip(offset / 3.5, -1.0, 1.0) * self.ANGLE \
            + self.rng.uniform(-self.JITTER, self.JITTER)
        self.vy = float(np.clip(vy, -self.MAX_VY, self.MAX_VY))

    def _advance(self, action):
        if action == 1:
            self.player_y -= self.PLAYER_SPEED
        elif action == 2:
            self.player_y += self.PLAYER_SPEED
        self.player_y = float(np.clip(self.player_y, 0.0, SIZE - self.PADDLE))
        if self.enemy_awake and self.vx < 0:
            target = self.ball_y + BALL / 2.0 - self.PADDLE / 2.0
            dy = np.clip(self.OPPONENT_GAIN * (target - self.opponent_y),
                         -self.OPPONENT_SPEED, self.OPPONENT_SPEED)
            self.opponent_y = float(np.clip(self.opponent_y + dy, 0.0, SIZE - self.PADDLE))

        prev_x = self.ball_x
        self.ball_x += self.vx
        self.ball_y += self.vy
        if self.ball_y < 0.0:
            self.ball_y, self.vy = -self.ball_y, -self.vy
        elif self.ball_y > SIZE - BALL:
            self.ball_y, self.vy = 2.0 * (SIZE - BALL) - self.ball_y, -self.vy

        def overlaps(paddle_y):
            return self.ball_y + BALL > paddle_y and self.ball_y < paddle_y + self.PADDLE

        reward = 0
        contact_x = self.PLAYER_X - BALL
        if self.vx > 0 and prev_x <= contact_x < self.ball_x + 1e-9 and overlaps(self.player_y):
            self.ball_x = 2.0 * contact_x - self.ball_x
            self.vx = -self.vx
            self._bounce(self.player_y)
            self.enemy_awake = True
        contact_x = self.OPPONENT_X + 1
        if self.vx < 0 and self.ball_x - 1e-9 < contact_x <= prev_x and overlaps(self.opponent_y):
            self.ball_x = 2.0 * contact_x - self.ball_x
            self.vx = -self.vx
            self._bounce(self.opponent_y)

        if self.ball_x > SIZE - BALL:
            self.score[1] += 1
            reward = -1
            self._serve()
        elif self.ball_x < 0.0:
            self.score[0] += 1
            reward = 1
            self._serve()
        terminal = max(self.score) >= self.WIN_SCORE
        return reward, terminal

    def render(self):
        frame = np.zeros((3, SIZE, SIZE), np.float32)
        self._paint(frame, self.OPPONENT_X, round(self.opponent_y), 1, self.PADDLE, OPPONENT_COLOR)
        self._paint(frame, self.PLAYER_X, round(self.player_y), 1, self.PADDLE, self._player_color())
        self._paint(frame, round(self.ball_x), round(self.ball_y), BALL, BALL, BALL_COLOR)
        return frame

    def info(self):
        return {
            "ball": (self.ball_x + BALL / 2.0, self.ball_y + BALL / 2.0),
            "player": (self.PLAYER_X + 0.5, self.player_y + self.PADDLE / 2.0),
            "opponent": (self.OPPONENT_X + 0.5, self.opponent_y + self.PADDLE / 2.0),
            "score": tuple(self.score),
            "ball_velocity": (self.vx, self.vy),
            "enemy_awake": self.enemy_awake,
        }


class MiniBreakout(ArcadeEnv):
    """3 x 8 block wall, one life, +1 per destroyed block."""

    game_id = "minibreakout"
    action_names = ("noop", "left", "right")
    ROWS, COLS = 3, 8
    BLOCK_W, BLOCK_H = 3, 2
    TOP = 3
    PADDLE = 4
    PADDLE_Y = 22
    PADDLE_SPEED = 1.5
    MAX_VX = 1.2
    JITTER = 0.15

    def _reset_state(self):
        self.blocks = np.ones((self.ROWS, self.COLS), dtype=bool)
        self.paddle_x = (SIZE - self.PADDLE) / 2.0
        self.score = 0
        self.ball_x = float(self.rng.uniform(4.0, SIZE - BALL - 4.0))
        self.ball_y = 12.0
        self.vx = float(self.rng.uniform(0.3, 0.8)) * (1.0 if self.rng.random() < 0.5 else -1.0)
        self.vy = 1.0

    @property
    def n_blocks(self):
        return int(self.blocks.sum())

    def _hit_blocks(self):
        rows = range(int(np.floor(self.ball_y)), int(np.floor(self.ball_y)) + BALL)
        cols = range(int(np.floor(self.ball_x)), int(np.floor(self.ball_x)) + BALL)
        hits = set()
        for y in rows:
            r = (y - self.TOP) // self.BLOCK_H
            if y < self.TOP or r >= self.ROWS:
                continue
            for x in cols:
                c = x // self.BLOCK_W
                if 0 <= c < self.COLS and self.blocks[r, c]:
                    hits.add((r, c))
        for r, c in hits:
            self.blocks[r, c] = False
        return len(hits)

    def _advance(self, action):
        if action == 1:
            self.paddle_x -= self.PADDLE_SPEED
        elif action == 2:
            self.paddle_x += self.PADDLE_SPEED
        self.paddle_x = float(np.clip(self.paddle_x, 0.0, SIZE - self.PADDLE))

        prev_y = self.ball_y
        self.ball_x += self.vx
        self.ball_y += self.vy
        if self.ball_x < 0.0:
            self.ball_x, self.vx = -self.ball_x, -self.vx
        elif self.ball_x > SIZE - BALL:
            self.ball_x, self.vx = 2.0 * (SIZE - BALL) - self.ball_x, -self.vx
        if self.ball_y < 0.0:
            self.ball_y, self.vy = -self.ball_y, -self.vy

        reward = self._hit_blocks()
        if reward:
            self.vy = -self.vy

        contact_y = self.PADDLE_Y - BALL
        if self.vy > 0 and prev_y <= contact_y < self.ball_y + 1e-9:
            if self.ball_x + BALL > self.paddle_x and self.ball_x < self.paddle_x + self.PADDLE:
                self.ball_y = 2.0 * contact_y - self.ball_y
                self.vy = -self.vy
                offset = (self.ball_x + BALL / 2.0) - (self.paddle_x + self.PADDLE / 2.0)
                vx = np.clip(offset / 3.5, -1.0, 1.0) * self.MAX_VX
                vx += self.rng.uniform(-self.JITTER, self.JITTER)
                self.vx = float(np.clip(vx, -self.MAX_VX, self.MAX_VX))
        self.score += reward
        lost = self.ball_y > SIZE - BALL
        terminal = lost or not self.blocks.any()
        return reward, terminal

    def _block_colors(self):
        cb = self.variation.block_color
        if cb is None:
            return BLOCK_ROW_COLORS
        return np.repeat(PALETTE[cb][None], self.ROWS, axis=0)

    def render(self):
        frame = np.zeros((3, SIZE, SIZE), np.float32)
        colors = self._block_colors()
        for r in range(self.ROWS):
            y = self.TOP + r * self.BLOCK_H
            for c in range(self.COLS):
                if self.blocks[r, c]:
                    frame[:, y:y + self.BLOCK_H, c * self.BLOCK_W:(c + 1) * self.BLOCK_W] = colors[r][:, None, None]
        self._paint(frame, round(self.paddle_x), self.PADDLE_Y, self.PADDLE, 1, self._player_color())
        self._paint(frame, round(self.ball_x), round(self.ball_y), BALL, BALL, BALL_COLOR)
        return frame

    def info(self):
        return {
            "ball": (self.ball_x + BALL / 2.0, self.ball_y + BALL / 2.0),
            "player": (self.paddle_x + self.PADDLE / 2.0, self.PADDLE_Y + 0.5),
            "blocks": self.n_blocks,
            "score": self.score,
            "ball_velocity": (self.vx, self.vy),
        }


GAMES = {"minipong": MiniPong, "minibreakout": MiniBreakout}


def make_env(game_id: str, **kwargs) -> ArcadeEnv:
    try:
        return GAMES[game_id](**kwargs)
    except KeyError:
        raise ConfigError(f"unknown environment {game_id!r}; choose from {sorted(GAMES)}") from None


def _reflect(pos, lo, hi):
    span = hi - lo
    if span <= 0:
        return lo
    p = (pos - lo) % (2 * span)
    return lo + (p if p <= span else 2 * span - p)


def expert_policy(env: ArcadeEnv) -> int:
    """Scripted tracker: steer the paddle toward the ball's predicted intercept."""
    if isinstance(env, MiniBreakout):
        contact_y = env.PADDLE_Y - BALL
        if env.vy > 0:
            t = (contact_y - env.ball_y) / env.vy
        else:
            t = (env.ball_y + contact_y) / max(abs(env.vy), 1e-6)
        x = _reflect(env.ball_x + env.vx * max(t, 0.0), 0.0, SIZE - BALL) + BALL / 2.0
        error = x - (env.paddle_x + env.PADDLE / 2.0)
        if abs(error) <= env.PADDLE_SPEED / 2.0:
            return 0
        return 2 if error > 0 else 1
    if isinstance(env, MiniPong):
        if env.vx > 0:
            t = (env.PLAYER_X - BALL - env.ball_x) / env.vx
            y = _reflect(env.ball_y + env.vy * max(t, 0.0), 0.0, SIZE - BALL) + BALL / 2.0
        else:
            y = env.ball_y + BALL / 2.0
        error = y - (env.player_y + env.PADDLE / 2.0)
        if abs(error) <= env.PLAYER_SPEED / 2.0:
            return 0
        return 2 if error > 0 else 1
    raise ConfigError(f"no expert for {type(env).__name__}")
