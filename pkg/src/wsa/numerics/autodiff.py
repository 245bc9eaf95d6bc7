"""Reverse-mode differentiation over a small, fixed vocabulary of array ops.

Every op returns a :class:`Var` that remembers its parents and a
vector-Jacobian product.  Graphs are recorded only through inputs that
require gradients, so frozen sub-networks cost a plain numpy forward pass.

Reductions over a "model" axis (``weighted_sum``, ``l1_normalize``,
``softmax``) sum their terms in sorted order.  This makes the result
independent of operand order, a property the fusion code relies on.
"""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError, StateError


class Param:
    """A named trainable (or frozen) array.

    Values are kept C-contiguous: BLAS may round differently for other
    memory layouts, and results must not depend on how a value was produced.
    """

    __slots__ = ("_data", "name", "frozen", "__weakref__")

    def __init__(self, data, name: str = "", frozen: bool = False):
        self.data = data
        self.name = name
        self.frozen = frozen

    @property
    def data(self):
        return self._data

    @data.setter
    def data(self, value):
        self._data = np.ascontiguousarray(value)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        flag = " frozen" if self.frozen else ""
        return f"Param({self.name!r}, shape={self.data.shape}{flag})"


class GradSet(dict):
    """Mapping ``Param -> gradient array``, in first-visit order."""

    def by_name(self):
        return {p.name: g for p, g in self.items()}


class Var:
    __slots__ = ("data", "parents", "vjp", "requires_grad", "param", "grad")

    def __init__(self, data, parents=(), vjp=None, requires_grad=False, param=None):
        self.data = data
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.param = param
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Var(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def as_var(x) -> Var:
    if isinstance(x, Var):
        return x
    if isinstance(x, Param):
        return Var(x.data, requires_grad=not x.frozen, param=x)
    return Var(np.asarray(x))


def variable(x) -> Var:
    """A leaf input whose gradient is stored on ``.grad`` after backward."""
    return Var(np.asarray(x), requires_grad=True)


def _node(data, parents, vjp):
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        return Var(data, parents, vjp, True)
    return Var(data)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def backward(loss: Var, seed=None) -> GradSet:
    """Propagate ``seed`` (default ones) from ``loss`` to every reachable leaf.

    Returns gradients for non-frozen parameters; plain input variables get
    theirs on ``.grad``.
    """
    if not isinstance(loss, Var) or not loss.requires_grad:
        raise StateError("no recorded forward pass leads to this value")
    order, seen, stack = [], set(), [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    grads = {id(loss): np.ones_like(loss.data) if seed is None else np.asarray(seed, loss.data.dtype)}
    out = GradSet()
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.vjp is None:
            if node.param is not None:
                prev = out.get(node.param)
                out[node.param] = g if prev is None else prev + g
            else:
                node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else prev + pg
    return out


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_var(a), as_var(b)
    sa, sb = a.data.shape, b.data.shape
    return _node(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_var(a), as_var(b)
    sa, sb = a.data.shape, b.data.shape
    return _node(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = as_var(a), as_var(b)
    ad, bd = a.data, b.data
    return _node(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b):
    a, b = as_var(a), as_var(b)
    ad, bd = a.data, b.data
    y = ad / bd
    return _node(y, (a, b),
                 lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * y / bd, bd.shape)))


def minimum(a, b):
    a, b = as_var(a), as_var(b)
    ad, bd = a.data, b.data
    take_a = ad <= bd
    return _node(np.where(take_a, ad, bd), (a, b),
                 lambda g: (_unbroadcast(g * take_a, ad.shape), _unbroadcast(g * ~take_a, bd.shape)))


def clip(x, lo, hi):
    x = as_var(x)
    inside = (x.data >= lo) & (x.data <= hi)
    return _node(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


def relu(x):
    x = as_var(x)
    mask = x.data > 0
    return _node(x.data * mask, (x,), lambda g: (g * mask,))


def tanh(x):
    x = as_var(x)
    y = np.tanh(x.data)
    return _node(y, (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x):
    x = as_var(x)
    y = _sigmoid(x.data)
    return _node(y, (x,), lambda g: (g * y * (1.0 - y),))


def softplus(x):
    x = as_var(x)
    z = x.data
    y = np.maximum(z, 0) + np.log1p(np.exp(-np.abs(z)))
    return _node(y, (x,), lambda g: (g * _sigmoid(z),))


def identity(x):
    return as_var(x)


def exp(x):
    x = as_var(x)
    y = np.exp(x.data)
    return _node(y, (x,), lambda g: (g * y,))


def log(x):
    x = as_var(x)
    xd = x.data
    return _node(np.log(xd), (x,), lambda g: (g / xd,))


def square(x):
    x = as_var(x)
    xd = x.data
    return _node(xd * xd, (x,), lambda g: (2.0 * g * xd,))


ACTIVATIONS = {
    "identity": identity,
    "relu": relu,
    "tanh": tanh,
    "softplus": softplus,
    "sigmoid": sigmoid,
}


# ------------------------------------------------------------------ structure

def reshape(x, shape):
    x = as_var(x)
    old = x.data.shape
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def flatten(x):
    """Collapse everything but the leading batch axis."""
    x = as_var(x)
    return reshape(x, (x.data.shape[0], -1))


def transpose(x, axes=None):
    x = as_var(x)
    axes = tuple(reversed(range(x.data.ndim))) if axes is None else tuple(axes)
    inverse = np.argsort(axes)
    return _node(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def getitem(x, idx):
    x = as_var(x)
    shape, dtype = x.data.shape, x.data.dtype

    def vjp(g):
        out = np.zeros(shape, dtype)
        np.add.at(out, idx, g)
        return (out,)

    return _node(x.data[idx], (x,), vjp)


def pick(x, index):
    """``x[i, index[i]]`` for a 2-D ``x``."""
    x = as_var(x)
    index = np.asarray(index)
    rows = np.arange(x.data.shape[0])
    shape, dtype = x.data.shape, x.data.dtype

    def vjp(g):
        out = np.zeros(shape, dtype)
        out[rows, index] = g
        return (out,)

    return _node(x.data[rows, index], (x,), vjp)


def concat(xs, axis=1):
    xs = [as_var(x) for x in xs]
    sizes = [x.data.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]
    return _node(np.concatenate([x.data for x in xs], axis=axis), xs,
                 lambda g: tuple(np.split(g, cuts, axis=axis)))


def stack(xs, axis=1):
    xs = [as_var(x) for x in xs]
    n = len(xs)
    return _node(np.stack([x.data for x in xs], axis=axis), xs,
                 lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    x = as_var(x)
    shape = x.data.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(x.data.sum(axis=axis, keepdims=keepdims), (x,), vjp)


def mean(x, axis=None, keepdims=False):
    x = as_var(x)
    n = x.data.size if axis is None else np.prod([x.data.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis, keepdims), 1.0 / float(n))


# ------------------------------------------------------------------- affine

def matmul(a, b):
    a, b = as_var(a), as_var(b)
    ad, bd = a.data, b.data
    return _node(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def affine(x, weight, bias=None, rowwise=False):
    """``x @ weight.T + bias`` for ``x`` of shape [batch, in].

    ``rowwise`` computes each row with its own matrix product so a row's
    result does not depend on how many rows share the call.
    """
    x, weight = as_var(x), as_var(weight)
    xd, wd = x.data, weight.data
    if xd.ndim != 2 or xd.shape[1] != wd.shape[1]:
        raise DimensionError(f"affine expects [batch, {wd.shape[1]}], got {list(xd.shape)}")
    if rowwise:
        y = np.matmul(xd[:, None, :], wd.T)[:, 0, :]
    else:
        y = xd @ wd.T
    parents = [x, weight]
    if bias is not None:
        bias = as_var(bias)
        y = y + bias.data
        parents.append(bias)

    def vjp(g):
        gx = g @ wd if x.requires_grad else None
        gw = g.T @ xd if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=0)

    return _node(y, parents, vjp)


def conv_output_size(size, k, stride, padding):
    return (size + 2 * padding - k) // stride + 1


_INDEX_CACHE = {}


def _im2col_index(hp, wp, kh, kw, ho, wo, stride):
    """Flat positions in a padded [hp, wp] plane, ordered (i, j, row, col)."""
    key = (hp, wp, kh, kw, ho, wo, stride)
    index = _INDEX_CACHE.get(key)
    if index is None:
        rows = np.arange(kh)[:, None, None, None] + stride * np.arange(ho)[None, None, :, None]
        cols = np.arange(kw)[None, :, None, None] + stride * np.arange(wo)[None, None, None, :]
        index = _INDEX_CACHE[key] = (rows * wp + cols).reshape(-1)
    return index


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """Cross-correlation of ``x`` [N, C, H, W] with ``weight`` [O, C, kh, kw]."""
    x, weight = as_var(x), as_var(weight)
    xd, wd = x.data, weight.data
    if xd.ndim != 4:
        raise DimensionError(f"conv2d expects a 4-D input, got shape {list(xd.shape)}")
    n, c, h, w = xd.shape
    o, ci, kh, kw = wd.shape
    if ci != c:
        raise DimensionError(f"conv2d kernel expects {ci} input channels, got {c}")
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d output size {ho}x{wo} < 1 for input {h}x{w}")
    hp, wp = h + 2 * padding, w + 2 * padding
    if padding:
        xp = np.zeros((n, c, hp, wp), xd.dtype)
        xp[:, :, padding:padding + h, padding:padding + w] = xd
    else:
        xp = xd
    # columns laid out [N, C, kh, kw, H'*W'] so the product lands in [N, O, H'*W']
    index = _im2col_index(hp, wp, kh, kw, ho, wo, stride)
    cols = np.take(xp.reshape(n, c, hp * wp), index, axis=2).reshape(n, c * kh * kw, ho * wo)
    wm = wd.reshape(o, -1)
    # one product per sample keeps results independent of batch size
    y = np.matmul(wm, cols)
    parents = [x, weight]
    if bias is not None:
        bias = as_var(bias)
        y = y + bias.data[:, None]
        parents.append(bias)
    y = y.reshape(n, o, ho, wo)

    def vjp(g):
        go = g.reshape(n, o, ho * wo)
        gw = np.tensordot(go, cols, axes=([0, 2], [0, 2])).reshape(wd.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = np.matmul(wm.T, go).reshape(n, c, kh, kw, ho, wo)
            gxp = np.zeros(xp.shape, xd.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += \
                        gcols[:, :, i, j]
            gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        if bias is None:
            return gx, gw
        return gx, gw, go.sum(axis=(0, 2))

    return _node(y, parents, vjp)


def conv_transpose2x(x, weight, bias=None):
    """Transposed convolution with a 2x2 kernel and stride 2.

    ``weight`` is [C, O, 2, 2]; every input pixel paints its own 2x2 output
    patch, so ``y[n, o, 2i+a, 2j+b] = sum_c x[n, c, i, j] * weight[c, o, a, b]``.
    """
    x, weight = as_var(x), as_var(weight)
    xd, wd = x.data, weight.data
    if xd.ndim != 4 or xd.shape[1] != wd.shape[0]:
        raise DimensionError(f"conv_transpose2x kernel expects {wd.shape[0]} input channels, "
                             f"got shape {list(xd.shape)}")
    n, c, h, w = xd.shape
    o = wd.shape[1]
    xm = xd.reshape(n, c, h * w)
    wm = wd.reshape(c, o * 4).T
    y = np.matmul(wm, xm).reshape(n, o, 2, 2, h, w)
    parents = [x, weight]
    if bias is not None:
        bias = as_var(bias)
        y = y + bias.data[:, None, None, None, None]
        parents.append(bias)
    y = y.transpose(0, 1, 4, 2, 5, 3).reshape(n, o, 2 * h, 2 * w)

    def vjp(g):
        gm = g.reshape(n, o, h, 2, w, 2).transpose(0, 1, 3, 5, 2, 4).reshape(n, o * 4, h * w)
        gx = np.matmul(wm.T, gm).reshape(xd.shape) if x.requires_grad else None
        gw = np.matmul(gm, xm.transpose(0, 2, 1)).sum(axis=0).T.reshape(wd.shape) \
            if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, gm.reshape(n, o, 4 * h * w).sum(axis=(0, 2))

    return _node(y, parents, vjp)


def upsample2(x):
    """Nearest-neighbour 2x spatial upsampling of [N, C, H, W]."""
    x = as_var(x)
    n, c, h, w = x.data.shape
    y = x.data.repeat(2, axis=2).repeat(2, axis=3)
    return _node(y, (x,), lambda g: (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),))


# ----------------------------------------------------------- model-axis ops

def _ordered_sum(a, axis):
    return np.sort(a, axis=axis).sum(axis=axis, keepdims=True)


def softmax(x, axis=-1):
    x = as_var(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / _ordered_sum(e, axis)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _node(y, (x,), vjp)


def log_softmax(x, axis=-1):
    x = as_var(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse
    p = np.exp(y)
    return _node(y, (x,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def l1_normalize(x, axis=-1, eps=1e-12):
    """``x / max(sum|x|, eps)`` along ``axis``."""
    x = as_var(x)
    xd = x.data
    raw = _ordered_sum(np.abs(xd), axis)
    guarded = raw < eps
    norm = np.where(guarded, eps, raw)
    y = xd / norm

    def vjp(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return ((g - np.where(guarded, 0.0, inner * np.sign(xd))) / norm,)

    return _node(y, (x,), vjp)


def l2_normalize(x, axis=-1, eps=1e-12):
    """``x / max(||x||_2, eps)`` along ``axis``."""
    x = as_var(x)
    xd = x.data
    norm = np.sqrt(np.sum(xd * xd, axis=axis, keepdims=True))
    guarded = norm < eps
    norm = np.where(guarded, eps, norm)
    y = xd / norm

    def vjp(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return ((g - np.where(guarded, 0.0, inner * y)) / norm,)

    return _node(y, (x,), vjp)


def weighted_sum(weights, embeddings):
    """``sum_i weights[:, i] * embeddings[:, i, :]`` -> [batch, d]."""
    weights, embeddings = as_var(weights), as_var(embeddings)
    wd, ed = weights.data, embeddings.data
    if wd.shape != ed.shape[:2]:
        raise DimensionError(f"weights {list(wd.shape)} do not match embeddings {list(ed.shape)}")
    y = _ordered_sum(wd[:, :, None] * ed, 1)[:, 0, :]

    def vjp(g):
        return (ed * g[:, None, :]).sum(axis=2), wd[:, :, None] * g[:, None, :]

    return _node(y, (weights, embeddings), vjp)
