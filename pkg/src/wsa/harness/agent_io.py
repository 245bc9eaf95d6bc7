"""Saving and restoring whole agents (encoders included)."""
from __future__ import annotations

import numpy as np

from ..errors import CheckpointError, ConfigError
from ..pretrain import Encoder, load_params
from ..rl import AgentSpec, build_agent
from .checkpoint import load_checkpoint, save_checkpoint


def save_agent(agent, path, meta=None):
    arrays = {name: p.data for name, p in agent.named_parameters()}
    frozen = sorted(name for name, p in agent.named_parameters() if p.frozen)
    info = {"role": "agent", "spec": agent.spec.to_dict(), "n_actions": agent.n_actions,
            "composition": agent.composition(), "frozen": frozen}
    info.update(meta or {})
    return save_checkpoint(path, arrays, info)


def _placeholder_encoders(composition):
    kinds = set(composition["kinds"]) | {"autoencoder"} if composition else {"autoencoder"}
    return {k: Encoder(k).freeze() for k in sorted(kinds)}


def load_agent(path):
    """Rebuild an agent from :func:`save_agent` output; returns (agent, meta)."""
    ckpt = load_checkpoint(path)
    meta = ckpt.meta
    if meta.get("role") != "agent":
        raise CheckpointError(f"{path} does not hold an agent checkpoint")
    try:
        spec = AgentSpec(**meta["spec"])
    except (TypeError, KeyError, ConfigError) as exc:
        raise CheckpointError(f"{path}: bad agent spec in manifest: {exc}") from exc
    composition = meta.get("composition")
    encoders = None if spec.kind in ("e2e", "ft") else _placeholder_encoders(composition)
    agent = build_agent(spec, encoders, int(meta["n_actions"]), composition)
    load_params(agent, ckpt.arrays, str(path))
    frozen = set(meta.get("frozen", []))
    for name, p in agent.named_parameters():
        p.frozen = name in frozen
    return agent, meta


def agent_digest(agent):
    """Hex digest over every parameter (name, shape, bytes)."""
    import hashlib
    h = hashlib.sha256()
    for name, p in agent.named_parameters():
        h.update(name.encode())
        h.update(str(p.shape).encode())
        h.update(np.ascontiguousarray(p.data).tobytes())
    return h.hexdigest()
