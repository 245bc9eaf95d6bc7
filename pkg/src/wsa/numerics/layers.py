"""Parameter containers and the two layer types every network here is built from."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DimensionError
from . import autodiff as ad
from .autodiff import Param

RELU_GAIN = float(np.sqrt(2.0))
HEAD_GAIN = 0.01


class Module:
    """Collects :class:`Param` attributes (and those of sub-modules) by path."""

    def named_parameters(self, prefix=""):
        """``(path, Param)`` pairs; a Param reachable twice is listed once."""
        seen = set()
        for key, value in self.__dict__.items():
            for path, p in _walk(value, f"{prefix}{key}"):
                if id(p) not in seen:
                    seen.add(id(p))
                    yield path, p

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def trainable(self):
        return [p for p in self.parameters() if not p.frozen]

    def freeze(self, frozen=True):
        for p in self.parameters():
            p.frozen = frozen
        return self

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def n_params(self):
        return int(sum(p.size for p in self.parameters()))


def _walk(value, path):
    if isinstance(value, Param):
        yield path, value
    elif isinstance(value, Module):
        yield from value.named_parameters(path + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{path}.{i}")


def orthogonal(rng, shape, gain=1.0, dtype=np.float32):
    """Orthogonal matrix (rows or columns orthonormal) reshaped to ``shape``."""
    rows = shape[0]
    cols = int(np.prod(shape[1:]))
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return (gain * q[:rows, :cols]).reshape(shape).astype(dtype)


def default_gain(activation):
    return RELU_GAIN if activation == "relu" else 1.0


class Dense(Module):
    def __init__(self, n_in, n_out, activation="identity", rng=None, gain=None,
                 dtype=np.float32, rowwise=False):
        if activation not in ad.ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}")
        rng = np.random.default_rng(0) if rng is None else rng
        gain = default_gain(activation) if gain is None else gain
        self.weight = Param(orthogonal(rng, (n_out, n_in), gain, dtype))
        self.bias = Param(np.zeros(n_out, dtype))
        self.activation = activation
        self.rowwise = rowwise

    @property
    def n_in(self):
        return self.weight.shape[1]

    @property
    def n_out(self):
        return self.weight.shape[0]

    def __call__(self, x):
        return ad.ACTIVATIONS[self.activation](ad.affine(x, self.weight, self.bias, self.rowwise))


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0, activation="relu",
                 rng=None, gain=None, dtype=np.float32):
        if activation not in ad.ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}")
        if stride < 1 or padding < 0:
            raise ConfigError("stride must be positive and padding non-negative")
        rng = np.random.default_rng(0) if rng is None else rng
        gain = default_gain(activation) if gain is None else gain
        self.weight = Param(orthogonal(rng, (out_ch, in_ch, kernel, kernel), gain, dtype))
        self.bias = Param(np.zeros(out_ch, dtype))
        self.stride = stride
        self.padding = padding
        self.activation = activation

    def output_shape(self, h, w):
        k = self.weight.shape[2]
        ho = ad.conv_output_size(h, k, self.stride, self.padding)
        wo = ad.conv_output_size(w, k, self.stride, self.padding)
        if ho < 1 or wo < 1:
            raise DimensionError(f"conv output {ho}x{wo} < 1")
        return self.weight.shape[0], ho, wo

    def __call__(self, x):
        y = ad.conv2d(x, self.weight, self.bias, self.stride, self.padding)
        return ad.ACTIVATIONS[self.activation](y)


class Deconv2x(Module):
    """Learned 2x upsampling: transposed convolution, 2x2 kernel, stride 2."""

    def __init__(self, in_ch, out_ch, activation="relu", rng=None, gain=None, dtype=np.float32):
        if activation not in ad.ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}")
        rng = np.random.default_rng(0) if rng is None else rng
        gain = default_gain(activation) if gain is None else gain
        w = orthogonal(rng, (out_ch * 4, in_ch), gain, dtype)
        self.weight = Param(np.ascontiguousarray(w.T.reshape(in_ch, out_ch, 2, 2)))
        self.bias = Param(np.zeros(out_ch, dtype))
        self.activation = activation

    def __call__(self, x):
        return ad.ACTIVATIONS[self.activation](ad.conv_transpose2x(x, self.weight, self.bias))


def dense_forward(layer: Dense, x):
    """Array-in, array-out convenience wrapper around ``Dense.__call__``."""
    return layer(np.asarray(x)).data


def conv2d_forward(layer: Conv2d, x):
    return layer(np.asarray(x)).data
