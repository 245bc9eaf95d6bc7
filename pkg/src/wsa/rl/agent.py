"""Agents: a feature extractor (combiner or baseline trunk) plus a small
policy/value head."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError
from ..fusion import KINDS as COMBINER_KINDS, CombinerConfig, FusionOutput, ModelPool, Views, build_combiner
from ..numerics import HEAD_GAIN, Conv2d, Dense, Module, autodiff as ad
from ..pretrain import CANONICAL_ORDER, Encoder

BASELINES = ("e2e", "c1", "ft")
AGENT_KINDS = COMBINER_KINDS + BASELINES


@dataclass
class AgentSpec:
    kind: str = "wsa"
    models: list = field(default_factory=lambda: list(CANONICAL_ORDER[:3]))
    d: int = 64
    hidden: int = 64
    cnn_layers: int = 1
    reservoir: int = 512
    include_context_term: bool = False
    learner: str = "ppo"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ConfigError(f"unknown agent kind {self.kind!r}; choose from {AGENT_KINDS}")
        if self.learner not in ("ppo", "dqn"):
            raise ConfigError(f"unknown learner {self.learner!r}; choose ppo or dqn")
        if self.kind not in ("e2e", "c1") and not self.models:
            raise ConfigError("an agent needs at least one pre-trained model")
        self.models = list(self.models)

    @property
    def uses_encoders(self):
        return self.kind not in ("e2e", "ft")

    def to_dict(self):
        return asdict(self)

    def combiner_config(self, kind=None):
        return CombinerConfig(kind=kind or self.kind, d=self.d, hidden=self.hidden, cnn_layers=self.cnn_layers,
                              reservoir=self.reservoir, include_context_term=self.include_context_term,
                              seed=self.seed)


class CombinerFeatures(Module):
    """Representation from a combiner over a pool of encoders.

    With frozen encoders the encoder outputs are computed once when acting
    and stored; with trainable encoders the raw observation is stored and
    encoded again inside every update.
    """

    def __init__(self, combiner):
        self.combiner = combiner

    @property
    def frozen_inputs(self):
        pool = self.combiner.pool
        encs = list(pool.encoders) + ([pool.context] if pool.context is not None else [])
        return all(p.frozen for e in encs for p in e.parameters())

    @property
    def out_dim(self):
        return self.combiner.out_dim

    def precompute(self, obs):
        return self.combiner.views(obs) if self.frozen_inputs else np.asarray(obs, np.float32)

    def represent(self, stored) -> FusionOutput:
        views = stored if isinstance(stored, Views) else self.combiner.views(stored)
        return self.combiner.forward(views)


class E2EFeatures(Module):
    """Convolutional trunk trained from scratch on the stacked frames."""

    def __init__(self, rng, out=64):
        self.convs = [Conv2d(12, 16, 3, 2, 1, rng=rng), Conv2d(16, 32, 3, 2, 1, rng=rng),
                      Conv2d(32, 32, 3, 1, 1, rng=rng)]
        self.dense = Dense(32 * 36, out, "relu", rng=rng, rowwise=True)

    frozen_inputs = False

    @property
    def out_dim(self):
        return self.dense.n_out

    def precompute(self, obs):
        return np.asarray(obs, np.float32)

    def represent(self, obs) -> FusionOutput:
        h = np.asarray(obs, np.float32)
        if h.ndim == 3:
            h = h[None]
        for conv in self.convs:
            h = conv(h)
        return FusionOutput(self.dense(ad.flatten(h)))


class PolicyValueHead(Module):
    def __init__(self, n_in, n_actions, rng, width=64):
        self.trunk = Dense(n_in, width, "relu", rng=rng, rowwise=True)
        self.pi = Dense(width, n_actions, rng=rng, gain=HEAD_GAIN, rowwise=True)
        self.v = Dense(width, 1, rng=rng, gain=1.0, rowwise=True)

    def __call__(self, R):
        h = self.trunk(R)
        return self.pi(h), self.v(h)


class QHead(Module):
    def __init__(self, n_in, n_actions, rng, width=64):
        self.trunk = Dense(n_in, width, "relu", rng=rng, rowwise=True)
        self.q = Dense(width, n_actions, rng=rng, gain=1.0, rowwise=True)

    def __call__(self, R):
        return self.q(self.trunk(R))


def sample_categorical(logits, rng):
    """Inverse-CDF draw from softmax(logits), one uniform per row."""
    z = np.asarray(logits, np.float64)
    p = np.exp(z - z.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    u = rng.random(len(p))
    return np.minimum((np.cumsum(p, axis=1) < u[:, None]).sum(axis=1), p.shape[1] - 1)


def log_softmax_np(logits):
    z = np.asarray(logits, np.float64)
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


class Agent(Module):
    """Feature extractor + head.  ``head`` is a PolicyValueHead (PPO) or QHead (DQN)."""

    def __init__(self, spec: AgentSpec, features, head, n_actions):
        self.spec = spec
        self.features = features
        self.head = head
        self.n_actions = n_actions
        self.rng = np.random.default_rng([spec.seed, 1])

    @property
    def combiner(self):
        return getattr(self.features, "combiner", None)

    def outputs(self, stored):
        """(head outputs, fusion output) as graph nodes."""
        fused = self.features.represent(stored)
        return self.head(fused.R), fused

    def policy(self, stored):
        """Logits and values as arrays."""
        (logits, values), _ = self.outputs(stored)
        return logits.data, values.data[:, 0]

    def act(self, obs, mode="sample"):
        """Actions, their log-probabilities and value estimates for a batch.

        Greedy mode takes the arg-max logit; ties go to the lowest index.
        """
        stored = self.features.precompute(obs)
        if isinstance(self.head, QHead):
            q = self.head(self.features.represent(stored).R).data
            return np.argmax(q, axis=1), None, None, stored
        logits, values = self.policy(stored)
        if mode == "greedy":
            actions = np.argmax(logits, axis=1)
        elif mode == "sample":
            actions = sample_categorical(logits, self.rng)
        else:
            raise ConfigError(f"unknown action mode {mode!r}")
        logp = log_softmax_np(logits)[np.arange(len(actions)), actions]
        return actions, logp, values, stored

    def greedy(self, obs):
        return self.act(obs, "greedy")[0]

    def encoder_parameters(self):
        comb = self.combiner
        return [] if comb is None else comb.pool.parameters()

    def composition(self):
        comb = self.combiner
        if comb is None:
            return None
        return {"kinds": comb.pool.kinds, "active": list(comb.pool.active)}


def build_agent(spec: AgentSpec, encoders: dict | None, n_actions: int, composition=None) -> Agent:
    """Wire an agent.  ``encoders`` maps kind -> frozen Encoder (unused by e2e/ft).

    ``composition`` (kinds + active mask) rebuilds a pool that changed
    during training, e.g. when restoring a checkpoint.
    """
    rng = np.random.default_rng(spec.seed)
    head_cls = PolicyValueHead if spec.learner == "ppo" else QHead
    if spec.kind == "e2e":
        features = E2EFeatures(rng)
        return Agent(spec, features, head_cls(features.out_dim, n_actions, rng), n_actions)
    kinds = composition["kinds"] if composition else (["autoencoder"] if spec.kind == "c1" else spec.models)
    active = composition["active"] if composition else None
    if spec.kind == "ft":
        # full training: same architecture, encoders start from scratch and learn with the policy
        fresh = {k: Encoder(k, np.random.default_rng([spec.seed, i])) for i, k in enumerate(sorted(set(kinds) | {"autoencoder"}))}
        pool = ModelPool([fresh[k] for k in kinds], fresh["autoencoder"], active)
        combiner = build_combiner(pool, spec.combiner_config("wsa"))
    else:
        if encoders is None:
            raise ConfigError(f"the {spec.kind} agent needs pre-trained encoders")
        missing = sorted({*kinds, "autoencoder"} - set(encoders))
        if missing:
            raise ConfigError(f"missing pre-trained encoders: {missing}")
        pool = ModelPool([encoders[k] for k in kinds], encoders["autoencoder"], active)
        combiner = build_combiner(pool, spec.combiner_config("fix" if spec.kind == "c1" else spec.kind))
    features = CombinerFeatures(combiner)
    return Agent(spec, features, head_cls(features.out_dim, n_actions, rng), n_actions)
