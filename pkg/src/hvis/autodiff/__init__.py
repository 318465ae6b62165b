from . import functional
from .functional import conv1d_causal, gru_cell, matmul
from .gradcheck import gradcheck, numerical_gradient, relative_error
from .nn import Module, clip_weights_, xavier_uniform, zeros
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, as_tensor, backward, build_tape, no_grad

__all__ = [
    "Adam", "AdamState", "Module", "Tensor", "adam_step", "as_tensor", "backward",
    "build_tape", "clip_weights_", "conv1d_causal", "functional", "gradcheck", "gru_cell",
    "matmul", "no_grad", "numerical_gradient", "relative_error", "xavier_uniform", "zeros",
]
