"""Ways of merging several encoder embeddings into one state representation."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, DimensionError, UnsupportedCombinerError
from ..numerics import Conv2d, Dense, Module, Param, autodiff as ad
from .pool import ModelPool, Views, flat_size

KINDS = ("wsa", "lin", "fix", "cnn", "mix", "res", "dpa", "ens")
GRID = 6


@dataclass
class CombinerConfig:
    kind: str = "wsa"
    d: int = 64                 # adapter / embedding size
    hidden: int = 64            # shared weight network width
    cnn_layers: int = 1
    grid_channels: int = 8      # channels per model after reshaping to the grid
    cnn_channels: int = 16
    reservoir: int = 512
    spectral_scale: float = 0.9
    include_context_term: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown combiner {self.kind!r}; choose from {KINDS}")
        if self.d < 1 or self.hidden < 1:
            raise ConfigError("embedding size and hidden size must be positive")
        if self.kind in ("cnn", "mix") and self.cnn_layers < 1:
            raise ConfigError("the cnn combiner needs at least one convolutional layer")
        if self.kind == "res" and self.reservoir < 1:
            raise ConfigError("reservoir size must be positive")
        if self.include_context_term and self.kind != "wsa":
            raise ConfigError("include_context_term only applies to the wsa combiner")

    def to_dict(self):
        return asdict(self)


@dataclass
class FusionOutput:
    R: object                 # representation node [batch, out_dim]
    W: object = None          # normalized weights node [batch, k] (attention combiners)
    E: list = None            # adapted embeddings, one node [batch, d] per weighted term
    C: object = None          # context embedding node [batch, d]

    def weights(self):
        return None if self.W is None else self.W.data


def make_adapter(n_in, d, rng):
    return Dense(n_in, d, "relu", rng=rng, rowwise=True)


class SharedWeightNet(Module):
    """One MLP scoring every model: [C ; E_i] -> hidden relu -> softplus scalar."""

    def __init__(self, d, hidden, rng):
        self.hidden = Dense(2 * d, hidden, "relu", rng=rng, rowwise=True)
        self.out = Dense(hidden, 1, "softplus", rng=rng, gain=1.0, rowwise=True)

    def __call__(self, pair):
        return self.out(self.hidden(pair))


class ConstantWeightNet(Module):
    """Degenerate scorer returning the same raw weight for every input."""

    def __init__(self, value=1.0):
        self.value = float(value)

    def __call__(self, pair):
        return ad.as_var(np.full((pair.shape[0], 1), self.value, pair.data.dtype))


class Combiner(Module):
    kind = ""
    dynamic = False      # supports adding / removing models mid-training
    weighted = False     # exposes per-model weights

    def __init__(self, pool: ModelPool, cfg: CombinerConfig, rng=None):
        self.pool = pool
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed) if rng is None else rng

    @property
    def needs_context(self):
        return False

    def views(self, obs) -> Views:
        return self.pool.views(obs, with_context=self.needs_context)

    def __call__(self, obs) -> FusionOutput:
        return self.forward(self.views(obs))

    def forward(self, views: Views) -> FusionOutput:
        raise NotImplementedError

    @property
    def out_dim(self):
        raise NotImplementedError

    def combiner_parameters(self):
        """Parameters owned by the combiner itself (not by the encoders)."""
        enc = {id(p) for p in self.pool.parameters()}
        return [p for _, p in self.named_parameters() if id(p) not in enc]

    def add_model(self, encoder, seed):
        raise UnsupportedCombinerError(f"the {self.kind} combiner has a fixed input size; "
                                       "only wsa, dpa and ens accept new models")

    def remove_model(self, index):
        raise UnsupportedCombinerError(f"the {self.kind} combiner has a fixed input size; "
                                       "only wsa, dpa and ens can drop models")


class _Adapted(Combiner):
    """Combiners that map each model embedding to size d with an adapter."""

    def __init__(self, pool, cfg, rng=None):
        super().__init__(pool, cfg, rng)
        self.adapters = [make_adapter(flat_size(e), cfg.d, self.rng) for e in pool.encoders]

    def embeddings(self, views):
        return [self.adapters[i](ad.flatten(views.models[i])) for i in self.pool.active_indices]


class _Dynamic(_Adapted):
    dynamic = True
    weighted = True

    def __init__(self, pool, cfg, rng=None):
        super().__init__(pool, cfg, rng)
        context = pool.context
        self.context_adapter = make_adapter(flat_size(context), cfg.d, self.rng) if self.needs_context else None

    def context_embedding(self, views):
        if views.context is None:
            raise ConfigError(f"the {self.kind} combiner needs a context encoder")
        return self.context_adapter(ad.flatten(views.context))

    def add_model(self, encoder, seed):
        if not all(p.frozen for p in encoder.parameters()):
            raise ConfigError("only frozen encoders can join a running pool")
        index = self.pool.append(encoder)
        self.adapters.append(make_adapter(flat_size(encoder), self.cfg.d, np.random.default_rng(seed)))
        return index

    def remove_model(self, index):
        self.pool.deactivate(index)


class WSACombiner(_Dynamic):
    """Shared-network scalar weight per model, L1-normalized, weighted sum."""

    kind = "wsa"

    def __init__(self, pool, cfg, rng=None, weight_net=None):
        super().__init__(pool, cfg, rng)
        self.weight_net = SharedWeightNet(cfg.d, cfg.hidden, self.rng) if weight_net is None else weight_net

    @property
    def needs_context(self):
        return True

    @property
    def out_dim(self):
        return self.cfg.d

    def forward(self, views):
        C = self.context_embedding(views)
        E = self.embeddings(views)
        if self.cfg.include_context_term:
            E = [C] + E
        # one call per model on identically shaped inputs: weights cannot depend on pool order
        raw = ad.concat([self.weight_net(ad.concat([C, e], axis=1)) for e in E], axis=1)
        W = ad.l1_normalize(raw, axis=1)
        R = ad.weighted_sum(W, ad.stack(E, axis=1))
        return FusionOutput(R, W, E, C)


class ENSCombiner(_Dynamic):
    """Uniform average of adapted embeddings."""

    kind = "ens"

    @property
    def out_dim(self):
        return self.cfg.d

    def forward(self, views):
        E = self.embeddings(views)
        ones = np.ones((E[0].shape[0], len(E)), E[0].data.dtype)
        W = ad.l1_normalize(ones, axis=1)
        return FusionOutput(ad.weighted_sum(W, ad.stack(E, axis=1)), W, E, None)


class DPACombiner(_Dynamic):
    """Single-query scaled dot-product attention with the context as query."""

    kind = "dpa"

    @property
    def needs_context(self):
        return True

    @property
    def out_dim(self):
        return self.cfg.d

    def forward(self, views):
        C = self.context_embedding(views)
        E = self.embeddings(views)
        scale = 1.0 / np.sqrt(self.cfg.d)
        logits = ad.concat([ad.mul(ad.sum(ad.mul(C, e), axis=1, keepdims=True), scale) for e in E], axis=1)
        W = ad.softmax(logits, axis=1)
        return FusionOutput(ad.weighted_sum(W, ad.stack(E, axis=1)), W, E, C)


class LINCombiner(Combiner):
    """Raw embeddings flattened and concatenated in pool order."""

    kind = "lin"

    @property
    def out_dim(self):
        return sum(flat_size(self.pool.encoders[i]) for i in self.pool.active_indices)

    def forward(self, views):
        parts = [ad.flatten(views.models[i]) for i in self.pool.active_indices]
        return FusionOutput(ad.concat(parts, axis=1) if len(parts) > 1 else parts[0])


class FIXCombiner(_Adapted):
    """Each embedding adapted to size d, then concatenated."""

    kind = "fix"

    @property
    def out_dim(self):
        return self.cfg.d * self.pool.n_active

    def forward(self, views):
        E = self.embeddings(views)
        return FusionOutput(ad.concat(E, axis=1) if len(E) > 1 else E[0], E=E)


def is_spatial(encoder):
    return len(encoder.embedding_shape) == 3


class CNNCombiner(Combiner):
    """Every embedding reshaped onto a common [c, 6, 6] grid, stacked along
    channels and passed through 3x3 convolutions."""

    kind = "cnn"

    def __init__(self, pool, cfg, rng=None):
        super().__init__(pool, cfg, rng)
        c = cfg.grid_channels
        self.reshapers = []
        for e in pool.encoders:
            if is_spatial(e):
                ch, h, w = e.embedding_shape
                if (h, w) != (GRID, GRID):
                    raise DimensionError(f"spatial embedding {e.embedding_shape} is not on the {GRID}x{GRID} grid")
                self.reshapers.append(Conv2d(ch, c, 1, rng=self.rng))
            else:
                self.reshapers.append(Dense(flat_size(e), c * GRID * GRID, "relu", rng=self.rng, rowwise=True))
        in_ch = c * len(pool.encoders)
        self.convs = []
        for _ in range(cfg.cnn_layers):
            self.convs.append(Conv2d(in_ch, cfg.cnn_channels, 3, 1, 1, rng=self.rng))
            in_ch = cfg.cnn_channels

    @property
    def out_dim(self):
        return self.cfg.cnn_channels * GRID * GRID

    def grid(self, views):
        parts = []
        for i in self.pool.active_indices:
            v, layer = views.models[i], self.reshapers[i]
            if isinstance(layer, Conv2d):
                parts.append(layer(v))
            else:
                parts.append(ad.reshape(layer(ad.flatten(v)), (v.shape[0], self.cfg.grid_channels, GRID, GRID)))
        return ad.concat(parts, axis=1) if len(parts) > 1 else parts[0]

    def forward(self, views):
        h = self.grid(views)
        for conv in self.convs:
            h = conv(h)
        return FusionOutput(ad.flatten(h))


class _SubPool:
    """View of a subset of pool models, so a sub-combiner sees only them."""

    def __init__(self, pool, indices):
        self.encoders = [pool.encoders[i] for i in indices]
        self.active_indices = list(range(len(indices)))
        self.n_active = len(indices)
        self.context = None
        self.map = list(indices)

    def parameters(self):
        return []


class MIXCombiner(Combiner):
    """Spatial embeddings through the cnn path, flat ones through the fix
    path, outputs concatenated."""

    kind = "mix"

    def __init__(self, pool, cfg, rng=None):
        super().__init__(pool, cfg, rng)
        idx = pool.active_indices
        self.spatial = [i for i in idx if is_spatial(pool.encoders[i])]
        self.flat = [i for i in idx if not is_spatial(pool.encoders[i])]
        self.cnn = CNNCombiner(_SubPool(pool, self.spatial), cfg, self.rng) if self.spatial else None
        self.fix = FIXCombiner(_SubPool(pool, self.flat), cfg, self.rng) if self.flat else None

    @property
    def out_dim(self):
        return (self.cnn.out_dim if self.cnn else 0) + (self.fix.out_dim if self.fix else 0)

    def forward(self, views):
        parts = []
        for sub, idx in ((self.cnn, self.spatial), (self.fix, self.flat)):
            if sub is not None:
                parts.append(sub.forward(Views(None, {j: views.models[i] for j, i in enumerate(idx)})).R)
        return FusionOutput(ad.concat(parts, axis=1) if len(parts) > 1 else parts[0])


class RESCombiner(Combiner):
    """Fixed random tanh reservoir over the concatenated raw embeddings."""

    kind = "res"

    def __init__(self, pool, cfg, rng=None):
        super().__init__(pool, cfg, rng)
        n_in = sum(flat_size(e) for e in pool.encoders)
        w = self.rng.standard_normal((cfg.reservoir, n_in))
        w *= cfg.spectral_scale / np.linalg.norm(w, 2)
        self.reservoir = Param(w.astype(np.float32), "reservoir", frozen=True)

    @property
    def out_dim(self):
        return self.cfg.reservoir

    def forward(self, views):
        x = ad.concat([ad.flatten(views.models[i]) for i in self.pool.active_indices], axis=1) \
            if self.pool.n_active > 1 else ad.flatten(views.models[self.pool.active_indices[0]])
        return FusionOutput(ad.tanh(ad.affine(x, self.reservoir, None, rowwise=True)))


COMBINERS = {
    "wsa": WSACombiner, "ens": ENSCombiner, "dpa": DPACombiner, "lin": LINCombiner,
    "fix": FIXCombiner, "cnn": CNNCombiner, "mix": MIXCombiner, "res": RESCombiner,
}


def build_combiner(pool: ModelPool, cfg: CombinerConfig | None = None, **overrides) -> Combiner:
    cfg = cfg or CombinerConfig(**overrides)
    return COMBINERS[cfg.kind](pool, cfg)
