"""The set of frozen encoders a combiner draws from."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, StateError
from ..numerics import Module


@dataclass
class Views:
    """Raw encoder outputs for one batch: the context plus each active model.

    Entries are arrays for frozen encoders and graph nodes for trainable
    ones, so the same combiner code serves frozen and fine-tuned runs.
    """

    context: object = None
    models: dict = field(default_factory=dict)

    def take(self, index):
        """Rows ``index`` of every array view (used for minibatching)."""
        pick = (lambda a: None if a is None else a[index])
        return Views(pick(self.context), {i: pick(v) for i, v in self.models.items()})

    @property
    def batch(self):
        first = self.context if self.context is not None else next(iter(self.models.values()))
        return first.shape[0]


def flat_size(encoder):
    return int(np.prod(encoder.embedding_shape))


class ModelPool(Module):
    """Ordered encoders with an active mask and a separate context encoder."""

    def __init__(self, encoders, context=None, active=None):
        self.encoders = list(encoders)
        self.context = context
        self.active = [True] * len(self.encoders) if active is None else [bool(a) for a in active]
        if len(self.active) != len(self.encoders):
            raise ConfigError("active mask length must match the number of encoders")
        if not any(self.active):
            raise ConfigError("a model pool needs at least one active model")

    @property
    def active_indices(self):
        return [i for i, a in enumerate(self.active) if a]

    @property
    def n_active(self):
        return len(self.active_indices)

    @property
    def kinds(self):
        return [e.kind for e in self.encoders]

    def append(self, encoder):
        self.encoders.append(encoder)
        self.active.append(True)
        return len(self.encoders) - 1

    def deactivate(self, index):
        if not 0 <= index < len(self.encoders) or not self.active[index]:
            raise ConfigError(f"model {index} is not an active member of the pool")
        if self.n_active == 1:
            raise StateError("cannot remove the last active model")
        self.active[index] = False

    def views(self, obs, with_context=True) -> Views:
        """Run every needed encoder once (shared encoders are computed once)."""
        cache = {}

        def run(enc):
            key = id(enc)
            if key not in cache:
                out = enc(obs)
                frozen = all(p.frozen for p in enc.parameters())
                cache[key] = out.data if frozen else out
            return cache[key]

        context = run(self.context) if with_context and self.context is not None else None
        return Views(context, {i: run(self.encoders[i]) for i in self.active_indices})

