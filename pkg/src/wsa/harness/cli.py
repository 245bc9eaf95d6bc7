"""Command-line entry point: ``wsa <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..env import Variation
from ..errors import ConfigError, WSAError
from ..rl import EVAL_SEEDS, AgentSpec
from .checkpoint import atomic_write, dumps_json
from .config import EvalSettings, RunConfig


def _seeds(text):
    if not text:
        return list(EVAL_SEEDS)
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"seeds must be comma-separated integers, got {text!r}") from None


def _emit(report, out):
    text = dumps_json(report)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        atomic_write(out, text.encode())
    print(text, end="")


def _run_config(args, experiment):
    if args.config:
        cfg = RunConfig.load(args.config)
        d = cfg.to_dict()
    else:
        d = RunConfig(experiment=experiment).to_dict()
    d["experiment"] = experiment
    agent = d["agent"]
    flags = {"env": args.env, "variation": args.variation, "encoders": args.encoders, "out": args.out,
             "seed": args.seed, "total_steps": args.steps}
    d.update({k: v for k, v in flags.items() if v is not None})
    for key, value in (("kind", args.combiner), ("learner", args.learner), ("d", args.embed_dim)):
        if value is not None:
            agent[key] = value
    if args.models:
        agent["models"] = args.models.split(",")
    if args.eval_every is not None:
        d["eval"]["every"] = args.eval_every
    if args.eval_episodes is not None:
        d["eval"]["episodes"] = args.eval_episodes
        d["eval"]["final_episodes"] = args.eval_episodes
    if getattr(args, "schedule", None):
        with open(args.schedule) as fh:
            d["schedule"] = json.load(fh)
    elif experiment == "scale" and getattr(args, "mode", None) and not d.get("schedule"):
        from .schedule import ScaleSchedule
        make = ScaleSchedule.adding if args.mode == "add" else ScaleSchedule.removing
        d["schedule"] = make(args.interval).to_dict()
    return RunConfig.from_dict(d)


def cmd_collect(args):
    from ..pretrain import collect_dataset, save_dataset
    ds = collect_dataset(args.env or "minipong", args.policy, args.frames, args.seed or 0)
    save_dataset(ds, args.out)
    _emit({"out": str(args.out), "frames": len(ds.frames), "episodes": len(ds.episode_starts),
           "tags": ds.tag_counts(), "digest": ds.digest()}, None)


def cmd_pretrain(args):
    from ..pretrain import KINDS, TRAINERS, PretrainConfig, load_dataset, save_encoder
    if not args.dataset:
        raise ConfigError("pretrain needs --dataset")
    ds = load_dataset(args.dataset)
    kinds = KINDS if args.kinds in (None, "all") else tuple(args.kinds.split(","))
    bad = [k for k in kinds if k not in TRAINERS]
    if bad:
        raise ConfigError(f"unknown encoder kinds {bad}; choose from {list(TRAINERS)}")
    cfg = PretrainConfig(epochs=args.epochs, seed=args.seed or 0, lr=args.lr, batch=args.batch)
    report = {}
    for kind in kinds:
        res = TRAINERS[kind](ds, cfg)
        save_encoder(res.encoder, Path(args.out) / kind)
        report[kind] = {"final_loss": res.epoch_losses[-1], "epoch_losses": res.epoch_losses}
    _emit({"out": str(args.out), "encoders": report}, None)


def cmd_train(args, experiment="train"):
    from .runner import run_training
    cfg = _run_config(args, experiment)
    summary = run_training(cfg)
    _emit({"out": cfg.out, "final": summary["final"], "best": summary["best"]}, None)


def cmd_scale(args):
    cmd_train(args, "scale")


def _load(path):
    from .agent_io import load_agent
    return load_agent(path)


def cmd_eval(args):
    from .reports import eval_report
    agent, meta = _load(args.checkpoint)
    env = args.env or meta.get("env", "minipong")
    report = eval_report(agent, env, _seeds(args.seeds), args.episodes, Variation.parse(args.variation),
                         args.max_steps)
    _emit(report, args.report)


def cmd_robust(args):
    from .reports import robust_report
    agents, env = {}, args.env
    for item in args.checkpoint:
        label, _, path = item.rpartition("=")
        agent, meta = _load(path)
        agents[label or agent.spec.kind] = agent
        env = env or meta.get("env")
    _emit(robust_report(agents, env or "minibreakout", _seeds(args.seeds), args.episodes, args.max_steps), args.report)


def cmd_explain(args):
    from .reports import explain
    agent, meta = _load(args.checkpoint)
    paths = explain(agent, args.env or meta.get("env", "minipong"), args.out or "traces", args.episodes,
                    _seeds(args.seeds)[0], Variation.parse(args.variation), args.max_steps)
    _emit({"traces": [str(p) for p in paths]}, None)


def cmd_timing(args):
    from .reports import timing_report
    if args.checkpoint:
        agent, meta = _load(args.checkpoint)
        env = args.env or meta.get("env", "minipong")
    else:
        from ..env import make_env
        from ..rl import build_agent
        from .runner import load_encoder_dir
        spec = AgentSpec(kind=args.combiner or "wsa", d=args.embed_dim or 64)
        encoders = load_encoder_dir(args.encoders) if spec.uses_encoders else None
        env = args.env or "minipong"
        agent = build_agent(spec, encoders, make_env(env).n_actions)
    _emit(timing_report(agent, env, args.trials, args.batch), args.report)


def cmd_hns(args):
    from .reports import hns_compute
    try:
        hns, chns = hns_compute(args.score, args.random, args.human)
    except ZeroDivisionError as exc:
        raise ConfigError(str(exc)) from None
    _emit({"score": args.score, "random": args.random, "human": args.human, "hns": hns, "chns": chns}, None)


def _common(p, run=False):
    p.add_argument("--env", choices=["minipong", "minibreakout"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--variation", default=None, help="cp=<0-4>,cb=<0-4>,lazy=<bool>")
    if run:
        p.add_argument("--config", help="JSON run configuration; flags override it")
        p.add_argument("--combiner", help="wsa, dpa, ens, lin, fix, cnn, mix, res, e2e, c1 or ft")
        p.add_argument("--learner", choices=["ppo", "dqn"])
        p.add_argument("--embed-dim", type=int)
        p.add_argument("--models", help="comma-separated encoder kinds")
        p.add_argument("--steps", type=int)
        p.add_argument("--encoders", help="directory of encoder checkpoints")
        p.add_argument("--eval-every", type=int)
        p.add_argument("--eval-episodes", type=int)


def _eval_flags(p, episodes):
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seeds", help="comma-separated evaluation seeds")
    p.add_argument("--episodes", type=int, default=episodes)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--report", help="write the JSON report here too")


def build_parser():
    ap = argparse.ArgumentParser(prog="wsa", description="Fusing frozen encoders for reinforcement learning.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="record a frame dataset")
    _common(p)
    p.add_argument("--policy", default="random", choices=["random", "expert", "mixed"])
    p.add_argument("--frames", type=int, default=50_000)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("pretrain", help="train and freeze encoders on a dataset")
    _common(p)
    p.add_argument("--dataset")
    p.add_argument("--kinds", default="all")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=64)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="train an agent")
    _common(p, run=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("scale", help="train while models join or leave the pool")
    _common(p, run=True)
    p.add_argument("--schedule", help="JSON schedule file")
    p.add_argument("--mode", choices=["add", "remove"], default="add")
    p.add_argument("--interval", type=int, default=50_000)
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    p.add_argument("--env", choices=["minipong", "minibreakout"])
    p.add_argument("--variation")
    _eval_flags(p, 10)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("robust", help="evaluate checkpoints over the variation grid")
    p.add_argument("--env", choices=["minipong", "minibreakout"])
    _eval_flags(p, 5)
    p.set_defaults(func=cmd_robust)
    p._option_string_actions["--checkpoint"].nargs = "+"
    p._option_string_actions["--checkpoint"].help = "one or more [label=]path entries"

    p = sub.add_parser("explain", help="write per-step model weight traces")
    p.add_argument("--env", choices=["minipong", "minibreakout"])
    p.add_argument("--variation")
    p.add_argument("--out")
    _eval_flags(p, 1)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("timing", help="inference timing and parameter counts")
    p.add_argument("--env", choices=["minipong", "minibreakout"])
    p.add_argument("--checkpoint")
    p.add_argument("--combiner")
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--encoders")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--report")
    p.set_defaults(func=cmd_timing)

    p = sub.add_parser("hns", help="human-normalized score")
    p.add_argument("--score", type=float, required=True)
    p.add_argument("--random", type=float, required=True, help="random-agent reference score")
    p.add_argument("--human", type=float, required=True, help="human reference score")
    p.set_defaults(func=cmd_hns)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except WSAError as exc:
        print(f"wsa {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"wsa {args.command}: error: {exc}", file=sys.stderr)
        return 8
    return 0


if __name__ == "__main__":
    sys.exit(main())
