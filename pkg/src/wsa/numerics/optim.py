from __future__ import annotations

import numpy as np

from ..errors import DimensionError, StateError


class Adam:
    """Adam with bias correction.  Moments are keyed by :class:`Param`, so
    parameters may join the optimised set mid-training (fresh zero moments).
    """

    def __init__(self, lr=2.5e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g in grads.items():
            if p.frozen:
                raise StateError(f"refusing to update frozen parameter {p.name!r}")
            if g.shape != p.data.shape:
                raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
            m = self.m.get(p)
            if m is None:
                m = self.m[p] = np.zeros_like(p.data)
                self.v[p] = np.zeros_like(p.data)
            v = self.v[p]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = (p.data - update).astype(p.data.dtype)


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_grad_norm(grads, max_norm):
    """Scale all gradients in place so their joint L2 norm is at most ``max_norm``."""
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        for p in grads:
            grads[p] = grads[p] * np.asarray(scale, grads[p].dtype)
    return norm
