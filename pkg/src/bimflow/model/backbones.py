"""Transformer backbone stacks.

Three variants share the block count N and model dimension D:

* ``encoder_only`` — bidirectional post-norm blocks (attention + LayerNorm,
  GELU feed-forward + LayerNorm) with learned absolute position embeddings.
* ``decoder_only`` — causal pre-norm blocks (RMSNorm, rotary positions,
  grouped-query attention, SwiGLU feed-forward) with a final RMSNorm.
* ``decoder_moe`` — the causal stack with a top-2 mixture-of-experts
  feed-forward in place of the dense SwiGLU.
"""

from __future__ import annotations

import numpy as np

from ..nn import (
    Embedding,
    GeluMLP,
    LayerNorm,
    MixtureOfExperts,
    Module,
    MultiHeadAttention,
    RMSNorm,
    SwiGluMLP,
    Tensor,
    causal_mask,
    padding_mask,
    rotary_position_angles,
)
from .config import ModelConfig


class EncoderBlock(Module):
    def __init__(self, dim: int, heads: int, hidden: int, rng: np.random.Generator):
        self.attention = MultiHeadAttention(dim, heads, rng)
        self.attention_norm = LayerNorm(dim)
        self.ffn = GeluMLP(dim, hidden, rng)
        self.ffn_norm = LayerNorm(dim)

    def __call__(self, x: Tensor, mask: np.ndarray | None) -> Tensor:
        x = self.attention_norm(x + self.attention(x, additive_mask=mask))
        return self.ffn_norm(x + self.ffn(x))


class DecoderBlock(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.attention = MultiHeadAttention(
            config.dim, config.heads, rng, kv_groups=config.kv_groups
        )
        self.attention_norm = RMSNorm(config.dim)
        if config.backbone == "decoder_moe":
            self.ffn: Module = MixtureOfExperts(
                config.dim,
                config.hidden,
                rng,
                num_experts=config.num_experts,
                active_experts=config.active_experts,
            )
        else:
            self.ffn = SwiGluMLP(config.dim, config.hidden, rng)
        self.ffn_norm = RMSNorm(config.dim)

    def __call__(
        self,
        x: Tensor,
        mask: np.ndarray,
        rotary: tuple[np.ndarray, np.ndarray],
    ) -> Tensor:
        x = x + self.attention(self.attention_norm(x), additive_mask=mask, rotary=rotary)
        return x + self.ffn(self.ffn_norm(x))


class EncoderBackbone(Module):
    """Bidirectional stack; sees the whole (padded) sequence."""

    causal = False

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.positions = Embedding(config.max_seq_len, config.dim, rng)
        self.blocks = [
            EncoderBlock(config.dim, config.heads, config.hidden, rng)
            for _ in range(config.layers)
        ]

    def __call__(self, x: Tensor, valid: np.ndarray) -> Tensor:
        n = x.shape[1]
        pos = self.positions(np.arange(n))
        x = x + pos.reshape(1, n, x.shape[2])
        mask = padding_mask(valid)
        for block in self.blocks:
            x = block(x, mask)
        return x


class DecoderBackbone(Module):
    """Causal stack with rotary positions; serves both decoder variants."""

    causal = True

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.blocks = [DecoderBlock(config, rng) for _ in range(config.layers)]
        self.final_norm = RMSNorm(config.dim)
        self._d_head = config.dim // config.heads

    def __call__(self, x: Tensor, valid: np.ndarray) -> Tensor:
        n = x.shape[1]
        angles = rotary_position_angles(n, self._d_head)
        rotary = (np.cos(angles)[None, None], np.sin(angles)[None, None])
        mask = causal_mask(n)[None, None] + padding_mask(valid)
        for block in self.blocks:
            x = block(x, mask, rotary)
        return self.final_norm(x)


def build_backbone(config: ModelConfig, rng: np.random.Generator) -> Module:
    if config.backbone == "encoder_only":
        return EncoderBackbone(config, rng)
    return DecoderBackbone(config, rng)
