"""Numpy-based neural network primitives with reverse-mode autodiff."""

from .layers import (
    MASK_VALUE,
    Embedding,
    GeluMLP,
    LayerNorm,
    Linear,
    MixtureOfExperts,
    Module,
    MultiHeadAttention,
    RMSNorm,
    SwiGluMLP,
    apply_rotary,
    causal_mask,
    gelu,
    padding_mask,
    rotary_position_angles,
    scaled_dot_product_attention,
    silu,
)
from .losses import focal_loss
from .tensor import (
    Tensor,
    concatenate,
    default_dtype,
    log_softmax,
    set_default_dtype,
    softmax,
    stack,
)

__all__ = [
    "MASK_VALUE",
    "Embedding",
    "GeluMLP",
    "LayerNorm",
    "Linear",
    "MixtureOfExperts",
    "Module",
    "MultiHeadAttention",
    "RMSNorm",
    "SwiGluMLP",
    "Tensor",
    "apply_rotary",
    "causal_mask",
    "concatenate",
    "default_dtype",
    "focal_loss",
    "gelu",
    "log_softmax",
    "padding_mask",
    "rotary_position_angles",
    "scaled_dot_product_attention",
    "set_default_dtype",
    "silu",
    "softmax",
    "stack",
]
