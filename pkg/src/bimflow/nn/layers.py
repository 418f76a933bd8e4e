"""Neural network building blocks on top of the autodiff tensor.

Every layer exposes ``parameters()`` yielding ``(name, Tensor)`` pairs in a
stable order so checkpoints serialize deterministically. Attention masking
is additive: disallowed positions receive ``-1e9`` before the row max is
taken, which drives their post-softmax weight to exactly zero in float32 —
outputs at a position are therefore bit-identical no matter what sits in
masked-out future positions.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .tensor import Tensor, concatenate, default_dtype, softmax, stack

MASK_VALUE = -1e9
_NORM_EPS = 1e-5


class Module:
    """Minimal layer base: named parameters and a ``__call__`` forward."""

    def parameters(self) -> Iterator[tuple[str, Tensor]]:
        for attr in sorted(vars(self)):
            value = getattr(self, attr)
            if isinstance(value, Tensor) and value.requires_grad:
                yield attr, value
            elif isinstance(value, Module):
                for name, tensor in value.parameters():
                    yield f"{attr}.{name}", tensor
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        for name, tensor in item.parameters():
                            yield f"{attr}.{i}.{name}", tensor

    def zero_grad(self) -> None:
        for _, tensor in self.parameters():
            tensor.zero_grad()


class Linear(Module):
    """Affine map ``x @ W + b`` with Glorot-style normal init."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        std = math.sqrt(2.0 / (in_features + out_features))
        dtype = default_dtype()
        self.weight = Tensor(
            (rng.standard_normal((in_features, out_features)) * std).astype(dtype),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class Embedding(Module):
    """Lookup table with N(0, 0.02) init; row 0 conventionally the padding id."""

    def __init__(self, num_embeddings: int, dim: int, rng: np.random.Generator):
        dtype = default_dtype()
        self.weight = Tensor(
            (rng.standard_normal((num_embeddings, dim)) * 0.02).astype(dtype),
            requires_grad=True,
        )

    def __call__(self, ids: np.ndarray) -> Tensor:
        return self.weight[np.asarray(ids, dtype=np.int64)]


class LayerNorm(Module):
    def __init__(self, dim: int):
        dtype = default_dtype()
        self.gain = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered**2.0).mean(axis=-1, keepdims=True)
        normed = centered * (var + _NORM_EPS) ** -0.5
        return normed * self.gain + self.bias


class RMSNorm(Module):
    def __init__(self, dim: int):
        self.gain = Tensor(np.ones(dim, dtype=default_dtype()), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        ms = (x**2.0).mean(axis=-1, keepdims=True)
        return x * (ms + _NORM_EPS) ** -0.5 * self.gain


def gelu(x: Tensor) -> Tensor:
    """Tanh approximation of the Gaussian error linear unit."""
    inner = math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3.0)
    return 0.5 * x * (1.0 + inner.tanh())


def silu(x: Tensor) -> Tensor:
    return x * x.sigmoid()


def rotary_position_angles(n: int, d_head: int, base: float = 10000.0) -> np.ndarray:
    """Angles ``pos * base^(-2i/d)`` for rotary position embedding, [n, d/2]."""
    half = d_head // 2
    inv_freq = base ** (-(np.arange(half, dtype=np.float64) * 2.0 / d_head))
    angles = np.arange(n, dtype=np.float64)[:, None] * inv_freq[None, :]
    return angles


def apply_rotary(x: Tensor, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    """Rotate interleaved (even, odd) feature pairs of ``x`` [..., n, d]."""
    even = x[..., 0::2]
    odd = x[..., 1::2]
    cos_t = Tensor(cos.astype(x.dtype))
    sin_t = Tensor(sin.astype(x.dtype))
    rot_even = even * cos_t - odd * sin_t
    rot_odd = even * sin_t + odd * cos_t
    out = stack([rot_even, rot_odd], axis=-1)
    return out.reshape(*x.shape)


def scaled_dot_product_attention(
    q: Tensor, k: Tensor, v: Tensor, additive_mask: np.ndarray | None = None
) -> Tensor:
    """``softmax(q k^T / sqrt(d_k) + mask) v`` over the last two axes."""
    d_k = q.shape[-1]
    scores = q @ k.swapaxes(-1, -2) * (1.0 / math.sqrt(d_k))
    if additive_mask is not None:
        scores = scores + Tensor(additive_mask.astype(scores.dtype))
    return softmax(scores, axis=-1) @ v


def causal_mask(n: int) -> np.ndarray:
    """Additive [n, n] mask: 0 on and below the diagonal, MASK_VALUE above."""
    mask = np.zeros((n, n), dtype=np.float64)
    mask[np.triu_indices(n, k=1)] = MASK_VALUE
    return mask


def padding_mask(valid: np.ndarray) -> np.ndarray:
    """Additive [B, 1, 1, n] key mask from a boolean validity array [B, n]."""
    add = np.where(np.asarray(valid, bool), 0.0, MASK_VALUE)
    return add[:, None, None, :]


class MultiHeadAttention(Module):
    """Scaled dot-product attention with grouped-query key/value sharing.

    ``kv_groups`` controls how many distinct key/value heads exist; the
    query heads in each group share one key/value pair. ``kv_groups ==
    num_heads`` reproduces standard multi-head attention.
    """

    def __init__(
        self,
        dim: int,
        num_heads: int,
        rng: np.random.Generator,
        kv_groups: int | None = None,
    ):
        if dim % num_heads:
            raise ValueError("dim must divide evenly into heads")
        kv_groups = num_heads if kv_groups is None else kv_groups
        if num_heads % kv_groups:
            raise ValueError("kv_groups must divide num_heads")
        self.num_heads = num_heads
        self.kv_groups = kv_groups
        self.d_head = dim // num_heads
        self.w_query = Linear(dim, dim, rng)
        self.w_key = Linear(dim, kv_groups * self.d_head, rng)
        self.w_value = Linear(dim, kv_groups * self.d_head, rng)
        self.w_out = Linear(dim, dim, rng)

    def _split_heads(self, x: Tensor, heads: int) -> Tensor:
        batch, n, _ = x.shape
        return x.reshape(batch, n, heads, self.d_head).transpose(0, 2, 1, 3)

    def __call__(
        self,
        x: Tensor,
        additive_mask: np.ndarray | None = None,
        rotary: tuple[np.ndarray, np.ndarray] | None = None,
    ) -> Tensor:
        batch, n, dim = x.shape
        q = self._split_heads(self.w_query(x), self.num_heads)
        k = self._split_heads(self.w_key(x), self.kv_groups)
        v = self._split_heads(self.w_value(x), self.kv_groups)
        if rotary is not None:
            cos, sin = rotary
            q = apply_rotary(q, cos, sin)
            k = apply_rotary(k, cos, sin)
        if self.kv_groups != self.num_heads:
            repeat = self.num_heads // self.kv_groups
            k = concatenate([k] * repeat, axis=1) if repeat > 1 else k
            v = concatenate([v] * repeat, axis=1) if repeat > 1 else v
            # Heads sharing a group must be adjacent after the repeat:
            # reorder [g0,g1,...,g0,g1,...] into [g0,g0,...,g1,g1,...].
            order = np.argsort(
                np.tile(np.arange(self.kv_groups), repeat), kind="stable"
            )
            k = k[:, order]
            v = v[:, order]
        context = scaled_dot_product_attention(q, k, v, additive_mask)
        merged = context.transpose(0, 2, 1, 3).reshape(batch, n, dim)
        return self.w_out(merged)


class GeluMLP(Module):
    """Two-layer position-wise feed-forward with a GELU in between."""

    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.up = Linear(dim, hidden, rng)
        self.down = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.down(gelu(self.up(x)))


class SwiGluMLP(Module):
    """Gated feed-forward: ``down(silu(gate(x)) * up(x))``."""

    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.gate = Linear(dim, hidden, rng)
        self.up = Linear(dim, hidden, rng)
        self.down = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.down(silu(self.gate(x)) * self.up(x))


class MixtureOfExperts(Module):
    """Top-k routed mixture of gated feed-forward experts.

    The router keeps only the top ``active_experts`` logits per token by
    adding a detached ``MASK_VALUE`` to the rest before the softmax, so
    unselected experts receive a weight of exactly zero and the gradient
    equals that of a softmax restricted to the selected experts. Every
    expert runs on every token (dense compute); selection only reweights.
    """

    def __init__(
        self,
        dim: int,
        hidden: int,
        rng: np.random.Generator,
        num_experts: int = 8,
        active_experts: int = 2,
    ):
        if active_experts > num_experts:
            raise ValueError("cannot activate more experts than exist")
        self.num_experts = num_experts
        self.active_experts = active_experts
        self.router = Linear(dim, num_experts, rng)
        self.experts = [SwiGluMLP(dim, hidden, rng) for _ in range(num_experts)]

    def __call__(self, x: Tensor) -> Tensor:
        logits = self.router(x)  # [..., E]
        raw = logits.data
        keep = self.num_experts - self.active_experts
        mask = np.zeros_like(raw)
        if keep > 0:
            dropped = np.argpartition(raw, keep - 1, axis=-1)[..., :keep]
            np.put_along_axis(mask, dropped, MASK_VALUE, axis=-1)
        weights = softmax(logits + Tensor(mask), axis=-1)
        out = None
        for e, expert in enumerate(self.experts):
            w_e = weights[..., e : e + 1]
            term = expert(x) * w_e
            out = term if out is None else out + term
        return out
