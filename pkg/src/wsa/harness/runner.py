"""Training runs: learner loop, periodic evaluation, pool schedules, checkpoints."""
from __future__ import annotations

import json
import os
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..env import VecEnv, make_env
from ..errors import ConfigError, TrainingError
from ..pretrain import CANONICAL_ORDER, KINDS, load_encoder
from ..rl import DQNTrainer, PPOTrainer, build_agent, evaluate_policy
from .agent_io import save_agent
from .checkpoint import atomic_write, dumps_json
from .config import RunConfig
from .metrics import MetricsWriter
from .schedule import ScaleSchedule

PROBE_SEED = 12345


def load_encoder_dir(path, kinds=None):
    """Encoders stored as ``<path>/<kind>/`` checkpoints, keyed by kind."""
    if path is None:
        raise ConfigError("this agent needs pre-trained encoders (--encoders)")
    root = Path(path)
    if not root.is_dir():
        raise ConfigError(f"encoder directory {root} does not exist")
    found = {}
    for kind in kinds or KINDS:
        if (root / kind).is_dir():
            found[kind] = load_encoder(root / kind)
    if not found:
        raise ConfigError(f"no encoder checkpoints under {root}")
    return found


def probe_observations(game_id, n=64, seed=PROBE_SEED):
    """A fixed batch of random-play observations for weight snapshots."""
    venv = VecEnv(game_id, 8, seed)
    rng = np.random.default_rng(seed)
    obs = [venv.reset()]
    while sum(len(o) for o in obs) < n:
        obs.append(venv.step(rng.integers(venv.n_actions, size=8))[0])
    return np.concatenate(obs)[:n]


def weight_snapshot(agent, probe):
    comb = agent.combiner
    if comb is None or not comb.weighted:
        return None
    w = comb(probe).weights()
    return None if w is None else np.asarray(w, np.float64).mean(axis=0).tolist()


def _row(stats):
    return {k: v for k, v in stats.items() if k != "seconds"}


class Run:
    """One training run writing into ``cfg.out``."""

    def __init__(self, cfg: RunConfig, encoders=None):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.variation = cfg.parsed_variation
        spec = replace(cfg.agent, seed=cfg.seed)
        self.schedule = None
        if cfg.experiment == "scale":
            if spec.kind not in ("wsa", "dpa", "ens"):
                raise ConfigError(f"pool schedules need a wsa, dpa or ens combiner, not {spec.kind}")
            self.schedule = ScaleSchedule.from_dict(cfg.schedule) if cfg.schedule else ScaleSchedule.adding()
            spec = replace(spec, models=self.schedule.initial_kinds)
        self.spec = spec
        if spec.uses_encoders and encoders is None:
            encoders = load_encoder_dir(cfg.encoders)
        self.encoders = encoders
        n_actions = make_env(cfg.env).n_actions
        self.agent = build_agent(spec, encoders, n_actions)
        if spec.learner == "ppo":
            pcfg = cfg.ppo_config()
            venv = VecEnv(cfg.env, pcfg.n_envs, cfg.seed, self.variation)
            self.trainer = PPOTrainer(self.agent, venv, pcfg, cfg.seed)
        else:
            venv = VecEnv(cfg.env, 1, cfg.seed, self.variation)
            self.trainer = DQNTrainer(self.agent, venv, cfg.dqn_config(), cfg.seed)
        self.probe = probe_observations(cfg.env) if self.agent.combiner is not None else None
        self.metrics = MetricsWriter(self.out / "metrics.jsonl")
        self.snapshots = []
        self.evals = []
        self.best = None
        self.stale = 0
        self.next_eval = cfg.eval.every or None
        self.next_ckpt = cfg.checkpoint_every or None
        self._prev_step = 0
        self._t0 = None

    def evaluate(self, episodes):
        e = self.cfg.eval
        return evaluate_policy(self.agent, self.cfg.env, e.seeds, episodes, self.variation, e.max_steps)

    def _meta(self, **extra):
        # the output location is not part of a checkpoint; reruns elsewhere must match byte for byte
        config = {k: v for k, v in self.cfg.to_dict().items() if k != "out"}
        meta = {"config": config, "env": self.cfg.env, "step": self.trainer.global_step}
        meta.update(extra)
        return meta

    def save(self, name, **extra):
        save_agent(self.agent, self.out / name, self._meta(**extra))

    def _elapsed(self):
        return time.perf_counter() - self._t0

    def _apply_schedule(self, step):
        comb = self.agent.combiner
        for event in self.schedule.due(self._prev_step, step):
            if event.op == "add":
                kind = CANONICAL_ORDER[event.index]
                if kind not in self.encoders:
                    raise ConfigError(f"schedule adds {kind} but no such encoder was loaded")
                comb.add_model(self.encoders[kind], [self.cfg.seed, event.step])
            else:
                comb.remove_model(event.index)
            weights = weight_snapshot(self.agent, self.probe)
            snap = {"event": "scale", "step": step, "at": event.step, "op": event.op, "index": event.index,
                    "kinds": comb.pool.kinds, "active": list(comb.pool.active), "weights": weights}
            self.snapshots.append(snap)
            self.metrics.write(snap, self._elapsed())

    def _callback(self, trainer, stats):
        step = trainer.global_step
        row = _row(stats)
        row["event"] = "update"
        if self.agent.combiner is not None:
            row["pool"] = self.agent.composition()
            row["weights"] = weight_snapshot(self.agent, self.probe)
        self.metrics.write(row, self._elapsed())
        if self.schedule is not None:
            self._apply_schedule(step)
        self._prev_step = step
        if self.next_ckpt is not None and step >= self.next_ckpt:
            while self.next_ckpt <= step:
                self.next_ckpt += self.cfg.checkpoint_every
            self.save("last")
        if self.next_eval is not None and step >= self.next_eval:
            while self.next_eval <= step:
                self.next_eval += self.cfg.eval.every
            return self._periodic_eval(step)
        return False

    def _periodic_eval(self, step):
        res = self.evaluate(self.cfg.eval.episodes)
        row = {"event": "eval", "step": step, "mean": res.mean, "std": res.std,
               "per_seed": res.per_seed.tolist(), "episodes": self.cfg.eval.episodes}
        self.evals.append(row)
        self.metrics.write(row, self._elapsed())
        self.save("last", eval=row)
        if self.best is None or res.mean > self.best["mean"]:
            self.best = row
            self.stale = 0
            self.save("best", eval=row)
        else:
            self.stale += 1
        patience = self.cfg.eval.patience
        if patience is not None and self.stale >= patience:
            self.metrics.write({"event": "early_stop", "step": step, "best_step": self.best["step"]}, self._elapsed())
            return True
        return False

    def run(self):
        atomic_write(self.out / "config.json", dumps_json(self.cfg.to_dict()).encode())
        self._t0 = time.perf_counter()
        try:
            self.trainer.train(self.cfg.total_steps, self._callback)
        except TrainingError as exc:
            self.metrics.write({"event": "diverged", "step": self.trainer.global_step, "error": str(exc)},
                               self._elapsed())
            raise
        res = self.evaluate(self.cfg.eval.final_episodes)
        final = {"event": "final_eval", "step": self.trainer.global_step, "mean": res.mean, "std": res.std,
                 "per_seed": res.per_seed.tolist(), "episodes": self.cfg.eval.final_episodes,
                 "seeds": list(res.seeds)}
        self.metrics.write(final, self._elapsed())
        self.save("final", eval=final)
        if self.best is None:
            self.save("best", eval=final)
        summary = {"final": final, "best": self.best, "evals": self.evals, "snapshots": self.snapshots,
                   "returns": res.returns.tolist(), "parameters": count_parameters(self.agent)}
        atomic_write(self.out / "eval.json", dumps_json(_jsonable(summary)).encode())
        with open(self.out / "timing.json", "w") as fh:
            json.dump({"seconds": round(self._elapsed(), 3), "steps": self.trainer.global_step}, fh)
        return summary


def _jsonable(obj):
    from .metrics import _clean
    return _clean(obj)


def count_parameters(agent):
    """Trainable and frozen parameter counts per component."""
    out = {}
    comb = agent.combiner
    groups = {"head": agent.head}
    if comb is None:
        groups["trunk"] = agent.features
    else:
        groups["combiner"] = None
        seen = set()
        for i, enc in enumerate(comb.pool.encoders):
            if id(enc) not in seen:
                seen.add(id(enc))
                groups[f"encoder:{enc.kind}"] = enc
        if comb.pool.context is not None and id(comb.pool.context) not in seen:
            groups[f"context:{comb.pool.context.kind}"] = comb.pool.context
    for name, module in groups.items():
        params = comb.combiner_parameters() if module is None else module.parameters()
        out[name] = {"trainable": int(sum(p.size for p in params if not p.frozen)),
                     "frozen": int(sum(p.size for p in params if p.frozen))}
    out["total"] = {k: sum(v[k] for v in out.values()) for k in ("trainable", "frozen")}
    return out


def run_training(cfg: RunConfig, encoders=None):
    return Run(cfg, encoders).run()


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)
