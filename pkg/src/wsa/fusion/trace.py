"""Per-step model weights along a rollout, for explaining a WSA/DPA agent."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import UnsupportedCombinerError


@dataclass
class WeightRecord:
    step: int
    weights: np.ndarray
    reward: float
    done: bool


def weight_trace(combiner, env, policy, seed, variation=None, max_steps=None):
    """Play one episode, recording the combiner's weights at every step.

    ``policy(fusion_output)`` maps the combiner output for the current
    observation to an action.
    """
    if not getattr(combiner, "weighted", False):
        raise UnsupportedCombinerError(f"weight traces need a weighted combiner (wsa or dpa), "
                                       f"not {combiner.kind!r}")
    obs = env.reset(seed, variation)
    records, done, step = [], False, 0
    while not done and (max_steps is None or step < max_steps):
        out = combiner(obs[None])
        action = policy(out)
        res = env.step(action)
        records.append(WeightRecord(step, out.weights()[0].astype(np.float64), res.reward, res.done))
        obs, done, step = res.observation, res.done, step + 1
    return records


def trace_columns(k, include_context=False):
    names = [f"model_{i}" for i in range(k)]
    return (["context"] + names) if include_context else names


def write_trace_csv(records, path, include_context=False):
    k = len(records[0].weights) - int(include_context) if records else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step"] + trace_columns(k, include_context) + ["reward", "done"])
        for r in records:
            w.writerow([r.step] + [repr(float(x)) for x in r.weights] + [repr(float(r.reward)), int(r.done)])
    return path
