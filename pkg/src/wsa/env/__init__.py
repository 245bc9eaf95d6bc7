"""Toy arcade environments with recolor and opponent-behavior variations."""
from .games import (BALL, N_STACK, SIZE, STEP_CAP, ArcadeEnv, GAMES, MiniBreakout, MiniPong,
                    StepResult, expert_policy, make_env)
from .variation import PALETTE, PALETTE_NAMES, Variation, recolor_grid
from .vector import VecEnv

__all__ = ["BALL", "N_STACK", "SIZE", "STEP_CAP", "ArcadeEnv", "GAMES", "MiniBreakout", "MiniPong",
           "StepResult", "expert_policy", "make_env", "PALETTE", "PALETTE_NAMES", "Variation",
           "recolor_grid", "VecEnv"]
