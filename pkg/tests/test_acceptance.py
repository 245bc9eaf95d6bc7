"""End-to-end acceptance checks, one test per criterion.

Heavy artifacts (encoder sets, training runs) are built once per session
and shared.  Each test records a one-line PASS/FAIL verdict that is
printed in the terminal summary.
"""
import filecmp
import time

import numpy as np
import pytest

from acceptance_log import record
from fusion_cases import make, permute_views, permuted, random_views
from oracles import brute_force_gae, dyadic
from rl_cases import tiny_agent, tiny_views
from wsa.env import VecEnv
from wsa.fusion import ConstantWeightNet
from wsa.harness.agent_io import load_agent
from wsa.harness.config import EvalSettings, RunConfig
from wsa.harness.metrics import read_metrics
from wsa.harness.reports import hns_compute, robust_report
from wsa.harness.runner import run_training
from wsa.harness.schedule import ScaleEvent, ScaleSchedule
from wsa.numerics import Conv2d, Dense, autodiff as ad, finite_diff_check
from wsa.pretrain import KINDS, TRAINERS, PretrainConfig, collect_dataset, load_encoder, save_encoder
from wsa.rl import (EVAL_SEEDS, AgentSpec, PPOConfig, PPOTrainer, build_agent, dqn_loss, evaluate_policy,
                    gae_compute, make_target, ppo_loss, td_targets)

pytestmark = pytest.mark.slow

STEPS = 300_000          # learning-sanity budget
BREAKOUT_STEPS = 200_000  # shared budget of the distribution-shift and robustness runs
SEEDS = (0, 1, 2)
FRAMES = 50_000
PRETRAIN = PretrainConfig(epochs=5, seed=0)
_T = {}


def _pretrain(root, game, policy):
    t0 = time.perf_counter()
    data = collect_dataset(game, policy, FRAMES, 0)
    for kind in KINDS:
        save_encoder(TRAINERS[kind](data, PRETRAIN).encoder, root / kind)
    _T[(game, policy)] = time.perf_counter() - t0
    return root


@pytest.fixture(scope="session")
def pong_encoders(tmp_path_factory):
    return _pretrain(tmp_path_factory.mktemp("pong_enc"), "minipong", "random")


@pytest.fixture(scope="session")
def breakout_random_encoders(tmp_path_factory):
    return _pretrain(tmp_path_factory.mktemp("brk_rand_enc"), "minibreakout", "random")


@pytest.fixture(scope="session")
def breakout_mixed_encoders(tmp_path_factory):
    return _pretrain(tmp_path_factory.mktemp("brk_mixed_enc"), "minibreakout", "mixed")


def _timed_run(cfg):
    t0 = time.perf_counter()
    summary = run_training(cfg)
    return summary, time.perf_counter() - t0


def _breakout_cfg(out, kind, encoders, seed):
    return RunConfig(env="minibreakout", agent=AgentSpec(kind=kind), encoders=str(encoders), out=str(out),
                     seed=seed, total_steps=BREAKOUT_STEPS,
                     eval=EvalSettings(every=0, final_episodes=50))


@pytest.fixture(scope="session")
def breakout_wsa_runs(tmp_path_factory, breakout_random_encoders, breakout_mixed_encoders):
    root = tmp_path_factory.mktemp("brk_wsa")
    runs = {}
    for label, enc in (("random", breakout_random_encoders), ("mixed", breakout_mixed_encoders)):
        for seed in SEEDS:
            summary, seconds = _timed_run(_breakout_cfg(root / f"{label}_{seed}", "wsa", enc, seed))
            runs[(label, seed)] = (root / f"{label}_{seed}", summary["final"]["mean"], seconds)
    return runs


# ------------------------------------------------------------------ 1

def test_criterion_01_fusion_invariants():
    t0 = time.perf_counter()
    shapes_all = [(128,), (16, 6, 6), (32, 6, 6), (16, 6, 6)]
    counts, failures = {}, []
    trials, batch = 100, 10
    for kind in ("wsa", "dpa", "ens"):
        n = 0
        for t in range(trials):
            rng = np.random.default_rng([t, len(kind)])
            k = int(rng.integers(1, 5))
            shapes = [shapes_all[i] for i in rng.permutation(4)[:k]]
            comb = make(kind, shapes=shapes, seed=t, d=16, hidden=16)
            views = random_views(rng, comb.pool, batch=batch, scale=float(rng.uniform(0.01, 20.0)))
            out = comb.forward(views)
            W, R = out.W.data, out.R.data
            E = np.stack([e.data for e in out.E], 1)
            slack = 1e-12 * max(1.0, np.abs(E).max())
            perm = list(rng.permutation(k))
            other = permuted(comb, perm).forward(permute_views(views, perm))
            ok = (np.all(W >= 0) and np.all(np.abs(W.sum(1) - 1) <= 1e-6)
                  and np.all(R >= E.min(1) - slack) and np.all(R <= E.max(1) + slack)
                  and np.array_equal(other.W.data, W[:, perm]) and np.array_equal(other.R.data, R))
            if kind == "wsa":
                const = make("wsa", shapes=shapes, seed=t, d=16, hidden=16)
                # power-of-two constants: c / (k c) rounds exactly like 1 / k
                const.weight_net = ConstantWeightNet(float(2.0 ** rng.integers(-2, 3)))
                ens = make("ens", shapes=shapes, seed=t, d=16, hidden=16)
                ens.adapters, const.adapters = comb.adapters, comb.adapters
                a, b = const.forward(views), ens.forward(views)
                ok = ok and np.array_equal(a.R.data, b.R.data) and np.array_equal(a.W.data, b.W.data)
            if not ok:
                failures.append((kind, t))
            n += batch
        counts[kind] = n
    seconds = time.perf_counter() - t0
    ok = not failures and min(counts.values()) >= 1000 and seconds < 60
    record(1, ok, f"inputs per combiner {counts}, failures {failures}, {seconds:.1f}s (< 60s)")
    assert ok


# ------------------------------------------------------------------ 2

def _fd_cases():
    rng = np.random.default_rng(0)
    F = np.float64

    dense = Dense(5, 4, "tanh", rng=rng, dtype=F)
    x = rng.standard_normal((3, 5))
    yield "dense", lambda: ad.sum(ad.mul(dense(x), 0.7)), dense.parameters()

    conv = Conv2d(2, 3, 3, 2, 1, "tanh", rng=rng, dtype=F)
    xi = rng.standard_normal((2, 2, 7, 7))
    r = rng.standard_normal((2, 3, 4, 4))
    yield "conv", lambda: ad.sum(ad.mul(conv(xi), r)), conv.parameters()

    wsa = make("wsa", shapes=[(6,), (2, 6, 6)], d=5, hidden=4)
    for p in wsa.combiner_parameters():
        p.data = p.data + rng.standard_normal(p.shape) * 0.05
    views = random_views(rng, wsa.pool, batch=3)
    rw = rng.standard_normal((3, 5))
    wl = lambda: ad.sum(ad.mul(wsa.forward(views).R, rw))
    yield "adapters", wl, wsa.adapters[0].parameters() + wsa.adapters[1].parameters() + wsa.context_adapter.parameters()
    yield "SharedWeightNet via wsa forward", wl, wsa.weight_net.parameters()

    dpa = make("dpa", shapes=[(6,), (2, 6, 6)], d=5)
    for p in dpa.combiner_parameters():
        p.data = p.data + rng.standard_normal(p.shape) * 0.05
    dviews = random_views(rng, dpa.pool, batch=3)
    yield "dpa", lambda: ad.sum(ad.mul(dpa.forward(dviews).R, rw)), dpa.combiner_parameters()

    cnn = make("cnn", shapes=[(4,), (2, 6, 6)], grid_channels=2, cnn_channels=2, cnn_layers=2)
    for p in cnn.combiner_parameters():
        p.data = p.data + 0.05
    cviews = random_views(rng, cnn.pool, batch=2)
    rc = rng.standard_normal((2, 72))
    yield "cnn combiner", lambda: ad.sum(ad.mul(cnn.forward(cviews).R, rc)), cnn.combiner_parameters()

    agent = tiny_agent()
    mb_views = tiny_views(rng, 4)
    logits, _ = agent.policy(mb_views)
    actions = rng.integers(3, size=4)
    logp = logits - np.log(np.exp(logits).sum(1, keepdims=True))
    mb = {"stored": mb_views, "actions": actions, "log_probs": logp[np.arange(4), actions] + rng.normal(0, .05, 4),
          "advantages": rng.standard_normal(4), "returns": rng.standard_normal(4), "values": np.zeros(4)}
    yield "ppo total loss", lambda: ppo_loss(agent, mb, PPOConfig())[0], agent.trainable()

    q = tiny_agent(learner="dqn")
    q.features.precompute = lambda obs: obs
    target = make_target(q)
    target.features.precompute = lambda obs: obs
    y = td_targets(target, tiny_views(rng, 4), rng.standard_normal(4), np.array([0., 1., 0., 0.]), 0.99)
    qv, qa = tiny_views(rng, 4), rng.integers(3, size=4)
    yield "dqn loss", lambda: dqn_loss(q, qv, qa, y), q.trainable()


def test_criterion_02_gradient_oracles():
    t0 = time.perf_counter()
    errors = {name: finite_diff_check(f, params, h=1e-5) for name, f, params in _fd_cases()}
    seconds = time.perf_counter() - t0
    worst = max(errors.values())
    ok = worst <= 1e-4 and seconds < 120 and len(errors) == 8
    record(2, ok, f"max relative error {worst:.2e} over {len(errors)} cases, {seconds:.1f}s (< 120s)")
    assert ok, errors


# ------------------------------------------------------------------ 3

EXACT_DISCOUNTS = [(0.5, 0.75), (0.5, 0.5), (0.25, 1.0), (1.0, 0.5), (0.75, 0.5), (0.5, 0.0)]


def test_criterion_03_gae_brute_force():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(100):
        r, v, last = dyadic(rng, 16), dyadic(rng, 16), dyadic(rng, ())
        dones = (rng.random(16) < rng.uniform(0, 0.5)).astype(float)
        # discount pairs whose powers stay exact over 16 steps
        gamma, lam = EXACT_DISCOUNTS[rng.integers(len(EXACT_DISCOUNTS))]
        adv, ret = gae_compute(r, v, dones, last, gamma, lam)
        mismatches += not (np.array_equal(adv, brute_force_gae(r, v, dones, last, gamma, lam))
                           and np.array_equal(ret, adv + v))
    seconds = time.perf_counter() - t0
    ok = mismatches == 0 and seconds < 10
    record(3, ok, f"{mismatches} inexact buffers of 100, {seconds:.2f}s (< 10s)")
    assert ok


# ------------------------------------------------------------------ 4

def _encoder_files_equal(a, b):
    return all(filecmp.cmp(a / n, b / n, shallow=False) for n in ("manifest.json", "params.bin"))


def _freeze_run(kind, encoders, steps, tmp):
    enc = {k: load_encoder(encoders / k) for k in KINDS}
    agent = build_agent(AgentSpec(kind=kind), enc, 3)
    pool = agent.combiner.pool
    members = {e.kind: e for e in list(pool.encoders) + [pool.context]}
    for k, e in members.items():
        save_encoder(e, tmp / "before" / k)
    PPOTrainer(agent, VecEnv("minipong", 8, 0), PPOConfig(total_steps=steps)).train()
    for k, e in members.items():
        save_encoder(e, tmp / "after" / k)
    return {k: _encoder_files_equal(tmp / "before" / k, tmp / "after" / k) for k in members}


def test_criterion_04_freeze_contract(pong_encoders, tmp_path):
    t0 = time.perf_counter()
    frozen = _freeze_run("wsa", pong_encoders, 10_240, tmp_path / "wsa")
    ft = _freeze_run("ft", pong_encoders, 10_240, tmp_path / "ft")
    seconds = time.perf_counter() - t0
    ok = all(frozen.values()) and not any(ft.values()) and seconds < 300
    record(4, ok, f"frozen identical {frozen}; FT identical {ft}; {seconds:.0f}s (< 300s)")
    assert ok


# ------------------------------------------------------------------ 5

def test_criterion_05_learning_sanity(pong_encoders, tmp_path):
    results = {}
    for seed in SEEDS:
        cfg = RunConfig(env="minipong", agent=AgentSpec(kind="wsa"), encoders=str(pong_encoders),
                        out=str(tmp_path / f"seed{seed}"), seed=seed, total_steps=STEPS,
                        eval=EvalSettings(every=0, final_episodes=50, seeds=list(EVAL_SEEDS)))
        summary, seconds = _timed_run(cfg)
        results[seed] = (summary["final"]["mean"], seconds)
    ok = all(m >= 3.0 and s < 1800 for m, s in results.values())
    detail = ", ".join(f"seed {k}: {m:+.2f} in {s / 60:.1f} min" for k, (m, s) in results.items())
    record(5, ok, f"MiniPong WSA greedy return (>= +3, < 30 min/seed): {detail}")
    assert ok


# ------------------------------------------------------------------ 6

def test_criterion_06_distribution_shift(breakout_wsa_runs):
    means = {label: np.mean([breakout_wsa_runs[(label, s)][1] for s in SEEDS]) for label in ("random", "mixed")}
    seconds = sum(r[2] for r in breakout_wsa_runs.values()) + _T[("minibreakout", "random")] \
        + _T[("minibreakout", "mixed")]
    ratio = means["mixed"] / means["random"] if means["random"] > 0 else float("inf")
    ok = means["mixed"] >= 1.5 * means["random"] and seconds < 3600
    record(6, ok, f"MiniBreakout WSA mixed-data {means['mixed']:.2f} vs random-data {means['random']:.2f} "
                  f"(ratio {ratio:.2f}, need >= 1.5), {seconds / 60:.1f} min (< 60)")
    assert ok


# ------------------------------------------------------------------ 7

def test_criterion_07_robustness(breakout_wsa_runs, breakout_mixed_encoders, tmp_path):
    t0 = time.perf_counter()
    agents = {}
    for seed in SEEDS:
        cfg = _breakout_cfg(tmp_path / f"e2e_{seed}", "e2e", breakout_mixed_encoders, seed)
        run_training(cfg)
        agents[f"e2e_{seed}"] = load_agent(tmp_path / f"e2e_{seed}" / "final")[0]
        agents[f"wsa_{seed}"] = load_agent(breakout_wsa_runs[("mixed", seed)][0] / "final")[0]
    report = robust_report(agents, "minibreakout", EVAL_SEEDS, episodes=6)
    seconds = time.perf_counter() - t0
    wsa = np.mean([report["mean"][f"wsa_{s}"] for s in SEEDS])
    e2e = np.mean([report["mean"][f"e2e_{s}"] for s in SEEDS])
    table = len(report["rows"]) == 25 and all("random" in r for r in report["rows"])
    ok = wsa >= e2e and table and seconds < 3600
    record(7, ok, f"25-cell recolor mean: WSA {wsa:.2f} vs E2E {e2e:.2f}, random {report['mean']['random']:.2f}; "
                  f"{seconds / 60:.1f} min (< 60)")
    assert ok


# ------------------------------------------------------------------ 8

def _scale_cfg(out, encoders, schedule, steps):
    return RunConfig(experiment="scale", env="minipong", agent=AgentSpec(kind="wsa"), encoders=str(encoders),
                     out=str(out), total_steps=steps, schedule=schedule.to_dict(),
                     eval=EvalSettings(every=0, final_episodes=1))


def test_criterion_08_scaling(pong_encoders, tmp_path):
    t0 = time.perf_counter()
    problems = []
    for mode, sched, expected in (("add", ScaleSchedule.adding(50_000), [2, 3, 4]),
                                  ("remove", ScaleSchedule.removing(50_000), [3, 2, 1])):
        out = run_training(_scale_cfg(tmp_path / mode, pong_encoders, sched, 200_000))
        cols = [len(s["weights"]) for s in out["snapshots"]]
        if cols != expected:
            problems.append(f"{mode}: columns {cols}")
        rows = read_metrics(tmp_path / mode / "metrics.jsonl")
        for r in rows:
            if r.get("weights") is not None and abs(sum(r["weights"]) - 1.0) > 1e-6:
                problems.append(f"{mode}: sum {sum(r['weights'])} at {r['step']}")
    for index in range(4):
        sched = ScaleSchedule([ScaleEvent(10_240, "remove", index)], [0, 1, 2, 3])
        run_training(_scale_cfg(tmp_path / f"rm{index}", pong_encoders, sched, 20_480))
        rows = read_metrics(tmp_path / f"rm{index}" / "metrics.jsonl")
        after = [r for r in rows if r["event"] == "update" and r["step"] > 10_240]
        if not after or not all(np.isfinite(r["loss"]) and np.all(np.isfinite(r["weights"])) for r in after):
            problems.append(f"removing model {index}: non-finite values")
    seconds = time.perf_counter() - t0
    ok = not problems and seconds < 2400
    record(8, ok, f"add 1->4 and remove 4->1 runs, 4 single removals; problems {problems}; "
                  f"{seconds / 60:.1f} min (< 40)")
    assert ok


# ------------------------------------------------------------------ 9

def test_criterion_09_determinism_and_persistence(pong_encoders, tmp_path):
    def cfg(name):
        return RunConfig(env="minipong", agent=AgentSpec(kind="wsa"), encoders=str(pong_encoders),
                         out=str(tmp_path / name), seed=7, total_steps=4096,
                         eval=EvalSettings(every=2048, episodes=2, final_episodes=3))
    first = run_training(cfg("a"))
    run_training(cfg("b"))
    same = all(filecmp.cmp(tmp_path / "a" / f, tmp_path / "b" / f, shallow=False)
               for f in ("metrics.jsonl", "eval.json", "final/params.bin", "final/manifest.json"))
    agent, meta = load_agent(tmp_path / "a" / "final")
    e = cfg("a").eval
    res = evaluate_policy(agent, "minipong", e.seeds, e.final_episodes)
    reproduced = res.mean == first["final"]["mean"] and res.std == first["final"]["std"]
    best, bmeta = load_agent(tmp_path / "a" / "best")
    best_res = evaluate_policy(best, "minipong", e.seeds, e.episodes)
    reproduced = reproduced and best_res.mean == bmeta["eval"]["mean"]
    ok = same and reproduced
    record(9, ok, f"byte-identical reruns {same}; reloaded eval {res.mean:.3f} vs in-training "
                  f"{first['final']['mean']:.3f}")
    assert ok


# ----------------------------------------------------------------- 10

# Externally supplied Pong reference scores (random agent, human player).
PONG_RANDOM, PONG_HUMAN = -20.7, 14.6


def test_criterion_10_hns():
    hns, chns = hns_compute(20.51, PONG_RANDOM, PONG_HUMAN)
    ok = abs(hns - 1.1810) <= 1e-3 and abs(chns - 1.0) <= 1e-3
    record(10, ok, f"score 20.51 with random {PONG_RANDOM}, human {PONG_HUMAN}: hns {hns:.4f} "
                   f"(target 1.1810), chns {chns:.4f} (target 1.0)")
    assert ok
