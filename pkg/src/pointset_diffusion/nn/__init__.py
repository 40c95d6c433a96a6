"""Minimal reverse-mode autodiff and the neural blocks used by the denoiser."""

from . import autograd
from .autograd import Tensor, parameter
from .layers import (
    MLP,
    EncoderBlock,
    LayerNorm,
    Linear,
    MultiHeadAttention,
    SetEncoder,
    attention_encoder,
    sinusoidal_embed,
)
from .optim import NonFiniteGradient, ParameterStore, adam_step, clip_by_global_norm, global_norm

__all__ = [
    "autograd",
    "Tensor",
    "parameter",
    "MLP",
    "EncoderBlock",
    "LayerNorm",
    "Linear",
    "MultiHeadAttention",
    "SetEncoder",
    "attention_encoder",
    "sinusoidal_embed",
    "NonFiniteGradient",
    "ParameterStore",
    "adam_step",
    "clip_by_global_norm",
    "global_norm",
]
