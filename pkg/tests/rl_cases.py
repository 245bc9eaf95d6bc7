"""Tiny f64 agents for exact and finite-difference learner tests."""
import numpy as np

from fusion_cases import StubEncoder
from wsa.fusion import CombinerConfig, ModelPool, Views, build_combiner
from wsa.rl import Agent, AgentSpec, CombinerFeatures, PolicyValueHead, QHead

N_ACTIONS = 3
SMALL = [(5,), (2, 2, 2)]
SMALL_CONTEXT = (4,)


def tiny_agent(kind="wsa", learner="ppo", seed=0, d=4, hidden=3, width=5):
    pool = ModelPool([StubEncoder(s) for s in SMALL], StubEncoder(SMALL_CONTEXT, "autoencoder"))
    comb = build_combiner(pool, CombinerConfig(kind=kind, d=d, hidden=hidden, seed=seed))
    rng = np.random.default_rng(seed + 1)
    head = PolicyValueHead(d, N_ACTIONS, rng, width) if learner == "ppo" else QHead(d, N_ACTIONS, rng, width)
    agent = Agent(AgentSpec(kind=kind, learner=learner, seed=seed), CombinerFeatures(comb), head, N_ACTIONS)
    return agent.astype(np.float64)


def tiny_views(rng, batch=4):
    models = {0: rng.standard_normal((batch, 5)), 1: np.abs(rng.standard_normal((batch, 2, 2, 2)))}
    return Views(np.abs(rng.standard_normal((batch, 4))), models)
