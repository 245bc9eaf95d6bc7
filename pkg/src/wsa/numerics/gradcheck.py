from __future__ import annotations

import numpy as np

from .autodiff import backward


def numeric_grad(f, param, h=1e-5):
    """Central differences of the scalar ``f()`` with respect to ``param``."""
    param.data = np.ascontiguousarray(param.data)
    g = np.zeros_like(param.data, dtype=np.float64)
    flat = param.data.reshape(-1)
    out = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float(f().data)
        flat[i] = orig - h
        down = float(f().data)
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return g


def finite_diff_check(f, params, h=1e-5):
    """Max over ``params`` of ``|analytic - numeric| / max(1, |analytic|)``.

    ``f`` builds a fresh graph from the current parameter values and returns
    a scalar :class:`~wsa.numerics.autodiff.Var`.  Parameters that receive no
    analytic gradient are compared against zero.
    """
    grads = backward(f())
    worst = 0.0
    for p in params:
        analytic = grads.get(p)
        analytic = np.zeros(p.shape) if analytic is None else np.asarray(analytic, np.float64)
        numeric = numeric_grad(f, p, h)
        err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
        worst = max(worst, float(err.max(initial=0.0)))
    return worst
