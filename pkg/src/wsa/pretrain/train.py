"""Self-supervised and supervised trainers for the four encoders."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..env import SIZE
from ..errors import ConfigError, DataError, TrainingError
from ..numerics import Adam, Deconv2x, Dense, autodiff as ad, backward
from .dataset import FrameDataset
from .encoders import KINDS, Encoder


@dataclass
class PretrainConfig:
    lr: float = 1e-3
    batch: int = 64
    epochs: int = 10
    seed: int = 0
    temperature: float = 0.1   # InfoNCE
    pos_weight: float = 4.0    # motion-mask BCE weight on moving pixels
    max_items: int | None = None

    def __post_init__(self):
        if self.lr <= 0 or self.batch < 1 or self.epochs < 1:
            raise ConfigError("lr, batch and epochs must be positive")


@dataclass
class TrainResult:
    encoder: Encoder
    batch_losses: list = field(default_factory=list)
    epoch_losses: list = field(default_factory=list)
    seconds: float = 0.0


def _fit(encoder, extra, items, loss_fn, cfg: PretrainConfig):
    """Minibatch Adam over shuffled ``items``; ``loss_fn(idx)`` builds the graph."""
    params = encoder.trainable() + [p for m in extra for p in m.trainable()]
    opt = Adam(lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed + 1)
    items = np.asarray(items)
    if cfg.max_items is not None:
        items = items[:cfg.max_items]
    result = TrainResult(encoder)
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        order = rng.permutation(items)
        total = 0.0
        for s in range(0, len(order), cfg.batch):
            loss = loss_fn(order[s:s + cfg.batch])
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingError(f"{encoder.kind} loss became {value} in epoch {epoch}, batch {s // cfg.batch}")
            grads = backward(loss)
            opt.step({p: grads[p] for p in params if p in grads})
            result.batch_losses.append(value)
            total += value * len(order[s:s + cfg.batch])
        result.epoch_losses.append(total / len(order))
    result.seconds = time.perf_counter() - start
    return result


def _finish(result, data, cfg, **extra):
    enc = result.encoder.freeze()
    enc.meta = {"kind": enc.kind, "env_id": data.env_id, "dataset": data.digest(),
                "dataset_policy": data.policy, "n_frames": len(data), "config": asdict(cfg),
                "final_loss": result.epoch_losses[-1], **extra}
    return result


def _check_nonempty(data):
    if len(data) == 0:
        raise DataError("dataset is empty")


# ------------------------------------------------------------- autoencoder

def train_autoencoder(data: FrameDataset, cfg: PretrainConfig | None = None) -> TrainResult:
    """Convolutional autoencoder on single frames; the encoder half is kept."""
    cfg = cfg or PretrainConfig()
    _check_nonempty(data)
    rng = np.random.default_rng(cfg.seed)
    enc = Encoder("autoencoder", rng)
    # linear output: a sigmoid head collapses to the all-black frame on sparse screens
    decoder = [Deconv2x(32, 16, "relu", rng=rng), Deconv2x(16, 3, "identity", rng=rng)]

    def loss_fn(idx):
        x = data.frames[idx]
        h = enc.forward(x)
        for layer in decoder:
            h = layer(h)
        return ad.mean(ad.square(ad.sub(h, x)))

    return _finish(_fit(enc, decoder, np.arange(len(data)), loss_fn, cfg), data, cfg)


def reconstruct(encoder: Encoder, decoder, frames):
    h = encoder.forward(frames)
    for layer in decoder:
        h = layer(h)
    return h.data


# ---------------------------------------------------- temporal contrastive

def info_nce(anchors, positives, temperature):
    """Mean cross-entropy of matching each anchor to its own positive among
    all positives in the batch, on cosine similarities."""
    za = ad.l2_normalize(anchors, axis=1)
    zp = ad.l2_normalize(positives, axis=1)
    logits = ad.mul(ad.matmul(za, ad.transpose(zp)), 1.0 / temperature)
    n = logits.shape[0]
    return ad.mul(ad.mean(ad.pick(ad.log_softmax(logits, axis=1), np.arange(n))), -1.0)


def train_temporal_contrastive(data: FrameDataset, cfg: PretrainConfig | None = None) -> TrainResult:
    """Frame stacks t and t+1 of one episode are positives; the rest of the
    batch supplies negatives."""
    cfg = cfg or PretrainConfig()
    _check_nonempty(data)
    items = data.successors()
    if len(items) == 0:
        raise DataError("temporal contrastive training needs episodes of at least 2 frames")
    rng = np.random.default_rng(cfg.seed)
    enc = Encoder("temporal_contrastive", rng)

    def loss_fn(idx):
        a = enc.forward(data.stack(idx, 4))
        p = enc.forward(data.stack(idx + 1, 4))
        return info_nce(a, p, cfg.temperature)

    return _finish(_fit(enc, [], items, loss_fn, cfg), data, cfg)


def temporal_similarity(encoder: Encoder, data: FrameDataset, n=256, seed=0):
    """Mean cosine similarity of (t, t+1) pairs and of random pairs."""
    rng = np.random.default_rng(seed)
    items = data.successors()
    idx = rng.choice(items, size=min(n, len(items)), replace=False)
    other = rng.choice(len(data), size=len(idx))

    def unit(i):
        z = encoder.forward(data.stack(i, 4)).data.astype(np.float64)
        return z / np.maximum(np.linalg.norm(z, axis=1, keepdims=True), 1e-12)

    a, p, r = unit(idx), unit(idx + 1), unit(other)
    return float(np.mean(np.sum(a * p, 1))), float(np.mean(np.sum(a * r, 1)))


# ---------------------------------------------------------------- keypoint

def keypoint_targets(data: FrameDataset):
    if data.ball is None or data.player is None or len(data.ball) != len(data):
        raise DataError("keypoint training needs ball and player coordinates for every frame")
    return (np.concatenate([data.ball, data.player], axis=1) / SIZE).astype(np.float32)


def train_keypoint(data: FrameDataset, cfg: PretrainConfig | None = None) -> TrainResult:
    """Regress normalised ball and paddle coordinates; only the trunk is kept."""
    cfg = cfg or PretrainConfig()
    _check_nonempty(data)
    targets = keypoint_targets(data)
    rng = np.random.default_rng(cfg.seed)
    enc = Encoder("keypoint", rng)
    head = Dense(16 * 36, 4, rng=rng, rowwise=True)

    def loss_fn(idx):
        pred = head(ad.flatten(enc.forward(data.frames[idx])))
        return ad.mean(ad.square(ad.sub(pred, targets[idx])))

    result = _fit(enc, [head], np.arange(len(data)), loss_fn, cfg)
    result.head = head
    return _finish(result, data, cfg)


def keypoint_mae(encoder, head, data, index):
    pred = head(ad.flatten(encoder.forward(data.frames[index]))).data
    return float(np.mean(np.abs(pred - keypoint_targets(data)[index])) * SIZE)


# ------------------------------------------------------------- motion mask

def motion_target(prev, cur):
    """1 where any channel changed between two frames, else 0; [B, 1, H, W]."""
    return np.any(prev != cur, axis=1, keepdims=True).astype(np.float32)


def _pairs(data):
    return data.successors() + 1


def train_motion_mask(data: FrameDataset, cfg: PretrainConfig | None = None) -> TrainResult:
    """Predict the changed-pixel mask of two consecutive frames."""
    cfg = cfg or PretrainConfig()
    _check_nonempty(data)
    items = _pairs(data)
    if len(items) == 0:
        raise DataError("motion-mask training needs consecutive frame pairs")
    rng = np.random.default_rng(cfg.seed)
    enc = Encoder("motion_mask", rng)
    decoder = [Deconv2x(16, 8, "relu", rng=rng), Deconv2x(8, 1, "identity", rng=rng)]

    def loss_fn(idx):
        x = data.stack(idx, 2)
        y = motion_target(x[:, :3], x[:, 3:])
        z = enc.forward(x)
        for layer in decoder:
            z = layer(z)
        # weighted binary cross-entropy on logits
        pos = ad.mul(ad.softplus(ad.mul(z, -1.0)), cfg.pos_weight * y)
        neg = ad.mul(ad.softplus(z), 1.0 - y)
        return ad.mean(ad.add(pos, neg))

    result = _fit(enc, decoder, items, loss_fn, cfg)
    result.decoder = decoder
    return _finish(result, data, cfg)


def mask_iou(encoder, decoder, data, index):
    x = data.stack(index, 2)
    y = motion_target(x[:, :3], x[:, 3:]) > 0
    pred = reconstruct(encoder, decoder, x) > 0
    union = np.logical_or(pred, y).sum()
    return float(np.logical_and(pred, y).sum() / union) if union else 1.0


TRAINERS = {
    "autoencoder": train_autoencoder,
    "temporal_contrastive": train_temporal_contrastive,
    "keypoint": train_keypoint,
    "motion_mask": train_motion_mask,
}
assert set(TRAINERS) == set(KINDS)
