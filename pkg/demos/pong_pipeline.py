"""The whole pipeline on MiniPong at toy scale.

1. Record frames from mixed random/expert play.
2. Pretrain and freeze the four encoders.
3. Train a WSA agent with PPO on top of them.
4. Evaluate the final checkpoint greedily and compare it with a random policy.

The default budget (under a minute on one core) is far too small to learn a
good policy.  Raise STEPS to 300_000 for an agent that beats the opponent.

    python demos/pong_pipeline.py [out_dir]
"""
import sys
from pathlib import Path

from wsa.harness.agent_io import load_agent
from wsa.harness.config import EvalSettings, RunConfig
from wsa.harness.reports import RandomPolicy
from wsa.harness.runner import run_training
from wsa.pretrain import TRAINERS, PretrainConfig, collect_dataset, save_encoder
from wsa.rl import AgentSpec, evaluate_policy

OUT = Path(sys.argv[1] if len(sys.argv) > 1 else "pong_demo")
FRAMES, EPOCHS, STEPS = 4000, 2, 30_000

data = collect_dataset("minipong", "mixed", FRAMES, seed=0)
print(f"collected {len(data)} frames, tags {data.tag_counts()}")

for kind, train in TRAINERS.items():
    res = train(data, PretrainConfig(epochs=EPOCHS, seed=0))
    save_encoder(res.encoder, OUT / "encoders" / kind)
    print(f"{kind:22s} loss {res.epoch_losses[0]:.4f} -> {res.epoch_losses[-1]:.4f}")

cfg = RunConfig(env="minipong", agent=AgentSpec(kind="wsa"), encoders=str(OUT / "encoders"),
                out=str(OUT / "run"), seed=0, total_steps=STEPS,
                eval=EvalSettings(every=10_000, episodes=1, final_episodes=2))
summary = run_training(cfg)
print(f"trained {STEPS} steps, final greedy return {summary['final']['mean']:.2f}")

agent, _ = load_agent(OUT / "run" / "final")
seeds = cfg.eval.seeds
ours = evaluate_policy(agent, "minipong", seeds, episodes_per_seed=2)
rand = evaluate_policy(RandomPolicy(3, seed=0), "minipong", seeds, episodes_per_seed=2)
print(f"reloaded checkpoint {ours.mean:.2f} +- {ours.std:.2f}, random policy {rand.mean:.2f}")
print(f"per-step metrics in {OUT / 'run' / 'metrics.jsonl'}")
