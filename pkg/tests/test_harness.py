import json
import os

import numpy as np
import pytest

from wsa.errors import CheckpointError, ConfigError, StateError
from wsa.harness.agent_io import agent_digest, load_agent, save_agent
from wsa.harness.cli import main
from wsa.harness.config import EvalSettings, RunConfig
from wsa.harness.metrics import MetricsWriter, read_metrics
from wsa.harness.reports import (RandomPolicy, explain, hns_compute, robust_report, timing_report,
                                 variation_grid)
from wsa.harness.runner import Run, count_parameters, load_encoder_dir, run_training
from wsa.harness.schedule import ScaleEvent, ScaleSchedule
from wsa.numerics import Dense, Module
from wsa.pretrain import KINDS, Encoder, save_encoder
from wsa.rl import AgentSpec, build_agent, evaluate_policy


@pytest.fixture(scope="module")
def enc_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("encoders")
    for i, kind in enumerate(KINDS):
        save_encoder(Encoder(kind, np.random.default_rng(i)).freeze(), root / kind)
    return root


def small_config(out, enc_dir, kind="wsa", steps=512, **kw):
    ppo = {"n_envs": 2, "n_steps": 64, "batch": 64, "n_epochs": 1}
    ev = EvalSettings(every=256, episodes=1, final_episodes=1, seeds=[1, 2], max_steps=60)
    return RunConfig(env="minipong", agent=AgentSpec(kind=kind, d=16, hidden=16), ppo=ppo, encoders=str(enc_dir),
                     out=str(out), total_steps=steps, eval=ev, **kw)


# ----------------------------------------------------------------- config

def test_run_config_roundtrip(tmp_path, enc_dir):
    cfg = small_config(tmp_path / "r", enc_dir, variation="cp=2")
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    back = RunConfig.load(path)
    assert back.to_json() == cfg.to_json()
    assert back.ppo_config().n_envs == 2 and back.ppo_config().total_steps == 512


@pytest.mark.parametrize("bad", [{"env": "pong"}, {"bogus": 1}, {"agent": {"kind": "swin"}},
                                 {"ppo": {"clip": 2.0}}, {"ppo": {"n_step": 3}}, {"variation": "cb=1"},
                                 {"total_steps": 0}, {"eval": {"episodes": 0}}])
def test_run_config_rejects_bad_input(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "nope.json")


# --------------------------------------------------------------- schedule

def test_default_schedules():
    add = ScaleSchedule.adding(100)
    assert add.initial == [0] and [e.index for e in add.events] == [1, 2, 3]
    rem = ScaleSchedule.removing(100)
    assert rem.initial == [0, 1, 2, 3] and [e.step for e in rem.events] == [100, 200, 300]
    assert ScaleSchedule.from_dict(json.loads(json.dumps(add.to_dict()))).to_dict() == add.to_dict()


@pytest.mark.parametrize("events,initial", [
    ([ScaleEvent(10, "add", 1), ScaleEvent(10, "add", 2)], [0]),      # not strictly increasing
    ([ScaleEvent(10, "remove", 0)], [0]),                               # below one model
    ([ScaleEvent(10, "add", 0)], [0]),                                  # already active
    ([ScaleEvent(10, "add", 7)], [0]),                                  # no such encoder
    ([ScaleEvent(10, "remove", 0), ScaleEvent(20, "remove", 0)], [0, 1, 2]),  # already removed
    ([ScaleEvent(10, "swap", 0)], [0]),
    ([], []),
])
def test_schedule_validation(events, initial):
    with pytest.raises(ConfigError):
        ScaleSchedule(events, initial)


def test_schedule_due_window():
    s = ScaleSchedule.adding(100)
    assert [e.step for e in s.due(0, 150)] == [100]
    assert [e.step for e in s.due(100, 300)] == [200, 300]


# ---------------------------------------------------------------- metrics

def test_metrics_step_monotone(tmp_path):
    m = MetricsWriter(tmp_path / "m.jsonl")
    m.write({"step": 1, "x": float("nan")}, 0.5)
    m.write({"step": 1})
    with pytest.raises(StateError):
        m.write({"step": 0})
    rows = read_metrics(tmp_path / "m.jsonl")
    assert rows == [{"step": 1, "x": None}, {"step": 1}]
    assert os.path.exists(tmp_path / "m.time.jsonl")


# ------------------------------------------------------------ checkpoints

@pytest.mark.parametrize("kind", ["wsa", "cnn", "res", "c1", "e2e", "ft"])
def test_agent_roundtrip_is_exact(kind, tmp_path, enc_dir):
    encoders = load_encoder_dir(enc_dir)
    agent = build_agent(AgentSpec(kind=kind, d=16, hidden=16, seed=3), encoders, 3)
    save_agent(agent, tmp_path / "a", {"env": "minipong"})
    back, meta = load_agent(tmp_path / "a")
    assert agent_digest(back) == agent_digest(agent)
    assert [p.frozen for p in back.parameters()] == [p.frozen for p in agent.parameters()]
    a = evaluate_policy(agent, "minipong", [5], 2, max_steps=40)
    b = evaluate_policy(back, "minipong", [5], 2, max_steps=40)
    np.testing.assert_array_equal(a.returns, b.returns)
    save_agent(back, tmp_path / "b", {"env": "minipong"})
    for name in ("manifest.json", "params.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert meta["env"] == "minipong"


def test_dynamic_pool_roundtrip(tmp_path, enc_dir):
    encoders = load_encoder_dir(enc_dir)
    agent = build_agent(AgentSpec(kind="wsa", models=["keypoint"], d=16, hidden=16), encoders, 3)
    agent.combiner.add_model(encoders["motion_mask"], 9)
    agent.combiner.add_model(encoders["autoencoder"], 10)
    agent.combiner.remove_model(0)
    save_agent(agent, tmp_path / "a")
    back, _ = load_agent(tmp_path / "a")
    assert back.combiner.pool.kinds == ["keypoint", "motion_mask", "autoencoder"]
    assert back.combiner.pool.active == [False, True, True]
    assert agent_digest(back) == agent_digest(agent)


def test_encoder_checkpoint_is_not_an_agent(enc_dir):
    with pytest.raises(CheckpointError):
        load_agent(enc_dir / "keypoint")


def test_missing_encoder_dir(tmp_path):
    with pytest.raises(ConfigError):
        load_encoder_dir(tmp_path / "none")
    with pytest.raises(ConfigError):
        load_encoder_dir(None)


# ------------------------------------------------------------------- runs

def test_training_is_reproducible(tmp_path, enc_dir):
    for name in ("a", "b"):
        run_training(small_config(tmp_path / name, enc_dir))
    for f in ("metrics.jsonl", "eval.json", "final/params.bin", "final/manifest.json", "best/manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
    rows = read_metrics(tmp_path / "a" / "metrics.jsonl")
    steps = [r["step"] for r in rows if r["event"] == "update"]
    assert steps == sorted(set(steps)) and steps[-1] == 512
    assert [r["step"] for r in rows if r["event"] == "eval"] == [256, 512]
    for r in rows:
        if r["event"] == "update":
            assert abs(sum(r["weights"]) - 1.0) < 1e-6


def test_final_checkpoint_reproduces_final_eval(tmp_path, enc_dir):
    cfg = small_config(tmp_path / "r", enc_dir, kind="dpa")
    summary = run_training(cfg)
    agent, meta = load_agent(tmp_path / "r" / "final")
    e = cfg.eval
    res = evaluate_policy(agent, "minipong", e.seeds, e.final_episodes, max_steps=e.max_steps)
    assert res.mean == summary["final"]["mean"] == meta["eval"]["mean"]
    best, bmeta = load_agent(tmp_path / "r" / "best")
    res = evaluate_policy(best, "minipong", e.seeds, e.episodes, max_steps=e.max_steps)
    assert res.mean == bmeta["eval"]["mean"]


def test_early_stopping(tmp_path, enc_dir):
    cfg = small_config(tmp_path / "r", enc_dir, kind="e2e", steps=4096)
    cfg.eval.patience = 1
    cfg.eval.every = 128
    run_training(cfg)
    rows = read_metrics(tmp_path / "r" / "metrics.jsonl")
    assert any(r["event"] == "early_stop" for r in rows)
    assert rows[-1]["step"] < 4096


def test_one_update_for_one_rollout(tmp_path, enc_dir):
    cfg = small_config(tmp_path / "r", enc_dir, kind="e2e", steps=1024)
    cfg.ppo = {"n_epochs": 1}
    cfg.eval.every = 0
    run_training(cfg)
    rows = read_metrics(tmp_path / "r" / "metrics.jsonl")
    assert [r["update"] for r in rows if r["event"] == "update"] == [1]


@pytest.mark.parametrize("mode", ["add", "remove"])
def test_scale_run_snapshots(mode, tmp_path, enc_dir):
    sched = (ScaleSchedule.adding if mode == "add" else ScaleSchedule.removing)(128)
    cfg = small_config(tmp_path / "r", enc_dir, steps=640, experiment="scale", schedule=sched.to_dict())
    out = run_training(cfg)
    snaps = out["snapshots"]
    assert len(snaps) == 3
    for i, s in enumerate(snaps):
        expected = i + 2 if mode == "add" else 3 - i
        assert len(s["weights"]) == expected
        assert abs(sum(s["weights"]) - 1.0) < 1e-6
    if mode == "remove":
        assert snaps[-1]["weights"] == [1.0]


def test_scale_needs_dynamic_combiner(tmp_path, enc_dir):
    with pytest.raises(ConfigError):
        Run(small_config(tmp_path / "r", enc_dir, kind="lin", experiment="scale"))


def test_dqn_run(tmp_path, enc_dir):
    cfg = small_config(tmp_path / "r", enc_dir, steps=2000)
    cfg.agent.learner = "dqn"
    cfg.dqn = {"learning_starts": 200, "target_update": 500, "capacity": 1000}
    cfg.eval.every = 1000
    out = run_training(cfg)
    rows = read_metrics(tmp_path / "r" / "metrics.jsonl")
    assert [r["step"] for r in rows if r["event"] == "update"] == [1000, 2000]
    assert np.isfinite(out["final"]["mean"])


# ---------------------------------------------------------------- reports

def test_hns_examples():
    hns, chns = hns_compute(20.51, -20.7, 14.6)
    assert chns == 1.0 and hns > 1.0
    assert hns_compute(-20.7, -20.7, 14.6) == (0.0, 0.0)
    assert hns_compute(14.6, -20.7, 14.6) == (1.0, 1.0)
    # a perfect 21 against the same references
    assert abs(hns_compute(21.0, -20.7, 14.6)[0] - 1.1813) < 1e-4
    with pytest.raises(ZeroDivisionError):
        hns_compute(1.0, 2.0, 2.0)


def test_parameter_counts(enc_dir):
    class One(Module):
        def __init__(self):
            self.layer = Dense(10, 5)
    assert One().n_params() == 55
    encoders = load_encoder_dir(enc_dir)
    wsa = count_parameters(build_agent(AgentSpec(kind="wsa"), encoders, 3))
    assert wsa["total"]["frozen"] > 0 and wsa["combiner"]["frozen"] == 0
    assert "encoder:keypoint" in wsa and "context:autoencoder" in wsa
    ft = count_parameters(build_agent(AgentSpec(kind="ft"), encoders, 3))
    assert ft["total"]["frozen"] == 0


def test_timing_rows(enc_dir):
    encoders = load_encoder_dir(enc_dir)
    rep = timing_report(build_agent(AgentSpec(kind="wsa"), encoders, 3), "minipong", trials=2)
    names = [r["component"] for r in rep["rows"]]
    assert names == ["temporal_contrastive", "keypoint", "motion_mask", "autoencoder",
                     "encode observations", "policy network"]
    assert rep["total_ms"] > 0


def test_robust_grid_and_random_column(enc_dir):
    assert len(variation_grid("minibreakout")) == 25
    agent = build_agent(AgentSpec(kind="e2e"), None, 3)
    rep = robust_report({"e2e": agent}, "minibreakout", seeds=[1], episodes=1, max_steps=60)
    assert len(rep["rows"]) == 25 and rep["columns"] == ["random", "e2e"]
    assert len({r["random"] for r in rep["rows"]}) == 1
    again = robust_report({"e2e": agent}, "minibreakout", seeds=[1], episodes=1, max_steps=60)
    assert again == rep


def test_explain_traces(tmp_path, enc_dir):
    import csv
    encoders = load_encoder_dir(enc_dir)
    agent = build_agent(AgentSpec(kind="wsa", d=16, hidden=16), encoders, 3)
    paths = explain(agent, "minipong", tmp_path, episodes=2, max_steps=50)
    assert len(paths) == 2
    for p in paths:
        rows = list(csv.DictReader(open(p)))
        assert len(rows) == 50
        for r in rows:
            assert abs(sum(float(r[f"model_{i}"]) for i in range(3)) - 1.0) < 1e-6
    # a weight network with constant output gives uniform traces
    out = agent.combiner.weight_net.out
    out.weight.data = np.zeros_like(out.weight.data)
    rows = list(csv.DictReader(open(explain(agent, "minipong", tmp_path / "c", max_steps=20)[0])))
    assert all(float(r["model_0"]) == float(r["model_1"]) == float(r["model_2"]) for r in rows)


def test_explain_rejects_unweighted(tmp_path, enc_dir):
    from wsa.errors import UnsupportedCombinerError
    agent = build_agent(AgentSpec(kind="lin"), load_encoder_dir(enc_dir), 3)
    with pytest.raises(UnsupportedCombinerError):
        explain(agent, "minipong", tmp_path)


def test_random_policy_stream():
    a = RandomPolicy(3, 1).greedy(np.zeros((5, 1)))
    b = RandomPolicy(3, 1).greedy(np.zeros((5, 1)))
    np.testing.assert_array_equal(a, b)


# -------------------------------------------------------------------- CLI

def test_cli_pipeline(tmp_path, enc_dir, capsys):
    data = tmp_path / "data"
    assert main(["collect", "--env", "minipong", "--frames", "100", "--seed", "1", "--out", str(data)]) == 0
    assert os.path.getsize(data / "frames.bin") == 100 * 3 * 24 * 24 * 4
    enc = tmp_path / "enc"
    assert main(["pretrain", "--dataset", str(data), "--kinds", "autoencoder", "--epochs", "1",
                 "--out", str(enc)]) == 0
    assert sorted(os.listdir(enc)) == ["autoencoder"]
    cfg = small_config(tmp_path / "unused", enc_dir, kind="c1")
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(cfg.to_json())
    run = tmp_path / "run"
    assert main(["train", "--config", str(cfg_path), "--encoders", str(enc), "--out", str(run), "--steps", "256"]) == 0
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(run / "final"), "--seeds", "1", "--episodes", "1",
                 "--max-steps", "30", "--report", str(tmp_path / "ev.json")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["std"] == 0.0 and json.loads((tmp_path / "ev.json").read_text()) == rep
    assert main(["timing", "--checkpoint", str(run / "final"), "--trials", "1"]) == 0
    assert main(["hns", "--score", "1", "--random", "0", "--human", "2"]) == 0
    assert json.loads(capsys.readouterr().out.split("}\n")[-2] + "}")["hns"] == 0.5


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["hns", "--score", "1", "--random", "2", "--human", "2"]) == 4
    assert main(["eval", "--checkpoint", str(tmp_path / "missing")]) == 8
    assert main(["train", "--combiner", "wsa", "--encoders", str(tmp_path / "none"), "--out", str(tmp_path / "r")]) == 4
    assert main(["pretrain", "--dataset", str(tmp_path / "none"), "--out", str(tmp_path / "e")]) != 0
    err = capsys.readouterr().err
    assert "error:" in err
