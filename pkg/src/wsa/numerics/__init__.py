"""Minimal differentiable numerics on top of numpy."""
from . import autodiff
from .autodiff import GradSet, Param, Var, as_var, backward, variable
from .gradcheck import finite_diff_check, numeric_grad
from .layers import HEAD_GAIN, RELU_GAIN, Conv2d, Deconv2x, Dense, Module, conv2d_forward, dense_forward, orthogonal
from .optim import Adam, clip_grad_norm, global_norm

__all__ = [
    "autodiff", "GradSet", "Param", "Var", "as_var", "backward", "variable",
    "finite_diff_check", "numeric_grad", "HEAD_GAIN", "RELU_GAIN", "Conv2d", "Deconv2x", "Dense", "Module",
    "conv2d_forward", "dense_forward", "orthogonal", "Adam", "clip_grad_norm",
    "global_norm",
]
