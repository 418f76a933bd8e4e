"""Attention-based fusion of per-step feature sets.

Each interaction step carries five features — command-id embedding, type
embedding, target embedding, two continuous values (time interval and
consecutive-occurrence count), and a fixed description embedding. Each is
projected to the shared model dimension, the five projected vectors
self-attend, and an attentive pooling query collapses them to one fused
vector per step. The pooling weights are exported for interpretability.
"""

from __future__ import annotations

import numpy as np

from ..nn import (
    Embedding,
    Linear,
    Module,
    MultiHeadAttention,
    Tensor,
    default_dtype,
    softmax,
)
from ..nn import stack as nn_stack

FEATURE_NAMES = ("id", "type", "target", "continuous", "description")


class FeatureFusion(Module):
    """Project K=5 step features to D, self-attend, and pool."""

    def __init__(
        self,
        num_commands: int,
        num_types: int,
        num_targets: int,
        dim: int,
        heads: int,
        description_dim: int,
        rng: np.random.Generator,
    ):
        # Row 0 of every table is the padding id.
        self.id_table = Embedding(num_commands + 1, dim, rng)
        self.type_table = Embedding(num_types + 1, dim, rng)
        self.target_table = Embedding(num_targets + 1, dim, rng)
        self.id_proj = Linear(dim, dim, rng)
        self.type_proj = Linear(dim, dim, rng)
        self.target_proj = Linear(dim, dim, rng)
        self.continuous_proj = Linear(2, dim, rng)
        self.description_proj = Linear(description_dim, dim, rng)
        self.attention = MultiHeadAttention(dim, heads, rng)
        self.pool_query = Tensor(
            (rng.standard_normal(dim) * 0.02).astype(default_dtype()),
            requires_grad=True,
        )
        self.num_features = len(FEATURE_NAMES)

    def __call__(
        self,
        ids: np.ndarray,
        type_ids: np.ndarray,
        target_ids: np.ndarray,
        continuous: np.ndarray,
        descriptions: np.ndarray,
    ) -> tuple[Tensor, np.ndarray]:
        """Fuse features into [B, n, D]; also return pool weights [B, n, K]."""
        batch, n = ids.shape
        feats = [
            self.id_proj(self.id_table(ids)),
            self.type_proj(self.type_table(type_ids)),
            self.target_proj(self.target_table(target_ids)),
            self.continuous_proj(Tensor(continuous)),
            self.description_proj(Tensor(descriptions)),
        ]
        stacked = nn_stack(feats, axis=2)  # [B, n, K, D]
        dim = stacked.shape[-1]
        flat = stacked.reshape(batch * n, self.num_features, dim)
        attended = self.attention(flat)  # [B*n, K, D]
        scores = attended @ self.pool_query.reshape(dim, 1)  # [B*n, K, 1]
        alpha = softmax(scores.reshape(batch * n, self.num_features), axis=-1)
        weighted = attended * alpha.reshape(batch * n, self.num_features, 1)
        fused = weighted.sum(axis=1).reshape(batch, n, dim)
        pool_weights = alpha.data.reshape(batch, n, self.num_features)
        return fused, pool_weights
