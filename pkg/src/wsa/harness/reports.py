"""Evaluation, robustness, explanation, timing and score-normalization reports."""
from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from ..env import Variation, make_env, recolor_grid
from ..errors import ConfigError, UnsupportedCombinerError
from ..fusion import weight_trace, write_trace_csv
from ..rl import EVAL_SEEDS, episode_seeds, evaluate_policy
from .runner import count_parameters


def hns_compute(score, random_ref, human_ref):
    """Human-normalized score and its capped variant."""
    if human_ref == random_ref:
        raise ZeroDivisionError("human and random reference scores must differ")
    hns = (score - random_ref) / (human_ref - random_ref)
    return hns, min(1.0, hns)


class RandomPolicy:
    """Uniform actions from a private stream; a stand-in agent for baselines."""

    def __init__(self, n_actions, seed=0):
        self.n_actions = n_actions
        self.rng = np.random.default_rng(seed)

    def greedy(self, obs):
        return self.rng.integers(self.n_actions, size=len(obs))


def eval_report(agent, game_id, seeds=EVAL_SEEDS, episodes=10, variation=None, max_steps=None):
    res = evaluate_policy(agent, game_id, seeds, episodes, variation, max_steps)
    return {"env": game_id, "variation": (variation or Variation()).to_string(), "episodes": episodes,
            **res.to_dict()}


def variation_grid(game_id):
    if game_id == "minibreakout":
        return recolor_grid()
    if game_id == "minipong":
        return [Variation(player_color=cp, lazy_enemy=lazy) for lazy in (False, True) for cp in (None, 0, 1, 2, 3, 4)]
    raise ConfigError(f"no variation grid for {game_id!r}")


def robust_report(agents: dict, game_id, seeds=EVAL_SEEDS, episodes=5, max_steps=None, random_seed=0):
    """Every grid cell evaluated for each labelled agent plus a random-policy column.

    The random policy restarts its stream in every cell, so with
    colour-only variations its column is identical across cells.
    """
    n_actions = make_env(game_id).n_actions
    labels = ["random"] + list(agents)
    rows = []
    for var in variation_grid(game_id):
        row = {"variation": var.to_string() or "default", **var.to_dict()}
        for label in labels:
            agent = RandomPolicy(n_actions, random_seed) if label == "random" else agents[label]
            res = evaluate_policy(agent, game_id, seeds, episodes, var, max_steps)
            row[label] = res.mean
            row[f"{label}_std"] = res.std
        rows.append(row)
    mean = {label: float(np.mean([r[label] for r in rows])) for label in labels}
    return {"env": game_id, "columns": labels, "episodes": episodes, "seeds": list(seeds), "rows": rows,
            "mean": mean}


def explain(agent, game_id, out_dir, episodes=1, seed=EVAL_SEEDS[0], variation=None, max_steps=None):
    """Greedy rollouts writing one weight-trace CSV per episode."""
    comb = agent.combiner
    if comb is None or not comb.weighted:
        kind = agent.spec.kind
        raise UnsupportedCombinerError(f"weight traces need a wsa, dpa or ens agent, not {kind}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def policy(fused):
        logits = agent.head(fused.R)
        logits = logits[0] if isinstance(logits, tuple) else logits
        return int(np.argmax(logits.data[0]))

    paths = []
    for k, s in enumerate(episode_seeds(seed, episodes)):
        env = make_env(game_id) if max_steps is None else make_env(game_id, max_steps=max_steps)
        records = weight_trace(comb, env, policy, s, variation, None)
        paths.append(write_trace_csv(records, out / f"episode_{k}.csv", comb.cfg.include_context_term))
    return paths


def _time(fn, trials):
    fn()  # warm-up
    t0 = time.perf_counter()
    for _ in range(trials):
        fn()
    return (time.perf_counter() - t0) / trials * 1e3


def timing_report(agent, game_id, trials=50, batch=1, seed=0):
    """Per-step inference costs in ms (per encoder, encoding, policy) and parameter counts."""
    env = make_env(game_id)
    obs = np.stack([env.reset(seed + i) for i in range(batch)])
    rows = []
    comb = agent.combiner
    if comb is not None:
        pool = comb.pool
        seen = set()
        members = list(pool.encoders) + ([pool.context] if comb.needs_context else [])
        for enc in members:
            if id(enc) in seen:
                continue
            seen.add(id(enc))
            rows.append({"component": enc.kind, "ms": _time(lambda e=enc: e(obs), trials)})
    stored = agent.features.precompute(obs)
    rows.append({"component": "encode observations", "ms": _time(lambda: agent.features.precompute(obs), trials)})
    rows.append({"component": "policy network", "ms": _time(lambda: agent.outputs(stored), trials)})
    total = sum(r["ms"] for r in rows if r["component"] in ("encode observations", "policy network"))
    return {"env": game_id, "agent": agent.spec.kind, "batch": batch, "trials": trials, "rows": rows,
            "total_ms": total, "parameters": count_parameters(agent)}
