"""The four frozen feature extractors and the ordered set they form."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DimensionError
from ..numerics import Conv2d, Dense, Module, autodiff as ad

KINDS = ("autoencoder", "temporal_contrastive", "keypoint", "motion_mask")
# add/remove order for pool-scaling runs; the context autoencoder stays outside it
CANONICAL_ORDER = ("temporal_contrastive", "keypoint", "motion_mask", "autoencoder")
INPUT_FRAMES = {"autoencoder": 1, "keypoint": 1, "motion_mask": 2, "temporal_contrastive": 4}
EMBEDDING_SHAPES = {
    "autoencoder": (32, 6, 6),
    "temporal_contrastive": (128,),
    "keypoint": (16, 6, 6),
    "motion_mask": (16, 6, 6),
}
OBS_SHAPE = (12, 24, 24)


class Encoder(Module):
    """Two stride-2 convolutions (24 -> 12 -> 6); the contrastive encoder adds
    a dense projection to a flat vector."""

    def __init__(self, kind: str, rng=None, dtype=np.float32):
        if kind not in KINDS:
            raise ConfigError(f"unknown encoder kind {kind!r}; choose from {KINDS}")
        rng = np.random.default_rng(0) if rng is None else rng
        self.kind = kind
        in_ch = 3 * INPUT_FRAMES[kind]
        out_ch = 16 if kind in ("keypoint", "motion_mask") else 32
        self.convs = [Conv2d(in_ch, 16, 4, 2, 1, rng=rng, dtype=dtype),
                      Conv2d(16, out_ch, 4, 2, 1, rng=rng, dtype=dtype)]
        self.proj = Dense(out_ch * 36, 128, rng=rng, dtype=dtype, rowwise=True) \
            if kind == "temporal_contrastive" else None
        self.meta = {}

    @property
    def embedding_shape(self):
        return EMBEDDING_SHAPES[self.kind]

    @property
    def n_input_frames(self):
        return INPUT_FRAMES[self.kind]

    @property
    def dtype(self):
        return self.convs[0].weight.data.dtype

    def select(self, obs):
        """Slice the frames this encoder reads from [B, 12, 24, 24] observations."""
        obs = np.asarray(obs)
        if obs.ndim == 3:
            obs = obs[None]
        if obs.ndim != 4 or obs.shape[1:] != OBS_SHAPE:
            raise DimensionError(f"{self.kind} encoder expects observations [B, 12, 24, 24], "
                                 f"got {list(obs.shape)}")
        return obs[:, -3 * self.n_input_frames:].astype(self.dtype, copy=False)

    def forward(self, x):
        """Network body on an already selected input; returns a graph node."""
        h = x
        for conv in self.convs:
            h = conv(h)
        if self.proj is not None:
            h = self.proj(ad.flatten(h))
        return h

    def __call__(self, obs):
        return self.forward(self.select(obs))

    def encode(self, obs):
        """Embeddings of a batch of observations as a plain array."""
        return self(obs).data


class EncoderSet:
    """Context autoencoder plus the pool models in canonical order."""

    def __init__(self, context: Encoder, models: list):
        if context is None or context.kind != "autoencoder":
            raise ConfigError("the context encoder must be an autoencoder")
        self.context = context
        self.models = list(models)

    @classmethod
    def from_dict(cls, encoders: dict, kinds=CANONICAL_ORDER):
        missing = [k for k in set(kinds) | {"autoencoder"} if k not in encoders]
        if missing:
            raise ConfigError(f"encoder set is missing {sorted(missing)}")
        return cls(encoders["autoencoder"], [encoders[k] for k in kinds])

    @property
    def kinds(self):
        return [m.kind for m in self.models]

    def __len__(self):
        return len(self.models)


def save_encoder(encoder: Encoder, path):
    from ..harness.checkpoint import save_checkpoint
    arrays = {name: p.data for name, p in encoder.named_parameters()}
    meta = {"role": "encoder", "kind": encoder.kind,
            "embedding_shape": list(encoder.embedding_shape), "training": encoder.meta}
    return save_checkpoint(path, arrays, meta)


def load_encoder(path) -> Encoder:
    from ..harness.checkpoint import load_checkpoint
    ckpt = load_checkpoint(path)
    kind = ckpt.meta.get("kind")
    if ckpt.meta.get("role") != "encoder" or kind not in KINDS:
        raise ConfigError(f"{path} does not hold an encoder checkpoint")
    enc = Encoder(kind)
    load_params(enc, ckpt.arrays, str(path))
    enc.meta = ckpt.meta.get("training", {})
    return enc.freeze()


def load_params(module: Module, arrays: dict, source=""):
    """Copy named arrays into ``module``'s parameters, checking names and shapes."""
    from ..errors import CheckpointError
    params = dict(module.named_parameters())
    if set(params) != set(arrays):
        missing = sorted(set(params) - set(arrays))
        extra = sorted(set(arrays) - set(params))
        raise CheckpointError(f"{source}: parameter names differ (missing {missing}, unexpected {extra})")
    for name, p in params.items():
        if tuple(arrays[name].shape) != p.shape:
            raise CheckpointError(f"{source}: {name} has shape {list(arrays[name].shape)}, expected {list(p.shape)}")
        p.data = np.array(arrays[name])
    return module
