"""The full recommendation network.

Composes feature fusion, a selectable Transformer backbone, and three
linear prediction heads (next command plus auxiliary type and target
classification). The training objective depends on the backbone: causal
decoders learn next-step prediction at every position, the bidirectional
encoder learns masked-step reconstruction with a learnable mask vector
spliced in after fusion. At inference both strategies predict the step
following the observed context.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import Linear, Module, Tensor, concatenate, default_dtype, focal_loss, softmax
from .backbones import build_backbone
from .config import MASKING_MLM, ModelConfig
from .data import ModelInputs
from .fusion import FeatureFusion


@dataclass
class LossParts:
    total: Tensor
    command: float
    type: float
    target: float


class RecommenderModel(Module):
    def __init__(
        self,
        config: ModelConfig,
        vocabulary_size: int,
        num_types: int,
        num_targets: int,
        rng: np.random.Generator,
    ):
        if vocabulary_size < 1:
            raise ValueError("vocabulary must be non-empty")
        self.config = config
        self.vocabulary_size = vocabulary_size
        self.num_types = num_types
        self.num_targets = num_targets
        self.fusion = FeatureFusion(
            vocabulary_size,
            num_types,
            num_targets,
            config.dim,
            config.heads,
            config.description_dim,
            rng,
        )
        self.backbone = build_backbone(config, rng)
        self.mask_embedding = Tensor(
            (rng.standard_normal(config.dim) * 0.02).astype(default_dtype()),
            requires_grad=True,
        )
        self.command_head = Linear(config.dim, vocabulary_size + 1, rng)
        self.type_head = Linear(config.dim, num_types + 1, rng)
        self.target_head = Linear(config.dim, num_targets + 1, rng)

    # -- forward pieces -----------------------------------------------------

    def fuse(self, batch: ModelInputs) -> tuple[Tensor, np.ndarray]:
        return self.fusion(
            batch.ids,
            batch.type_ids,
            batch.target_ids,
            batch.continuous,
            batch.descriptions,
        )

    def encode(self, fused: Tensor, valid: np.ndarray) -> Tensor:
        if fused.shape[1] > self.config.max_seq_len:
            raise ValueError(
                f"sequence length {fused.shape[1]} exceeds "
                f"maximum {self.config.max_seq_len}; truncate upstream"
            )
        return self.backbone(fused, valid)

    def _heads_at(
        self, hidden: Tensor, rows: np.ndarray, cols: np.ndarray
    ) -> tuple[Tensor, Tensor, Tensor]:
        picked = hidden[rows, cols]  # [P, D]
        return (
            self.command_head(picked),
            self.type_head(picked),
            self.target_head(picked),
        )

    def _splice_mask_embedding(self, fused: Tensor, one_hot: np.ndarray) -> Tensor:
        """Replace positions flagged in ``one_hot`` [B, n, 1] with the mask vector."""
        keep = Tensor((1.0 - one_hot).astype(fused.dtype))
        put = Tensor(one_hot.astype(fused.dtype))
        dim = fused.shape[-1]
        return fused * keep + self.mask_embedding.reshape(1, 1, dim) * put

    # -- training -----------------------------------------------------------

    def sample_mask_positions(
        self, valid: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        """Boolean [B, n]: ~mlm_ratio of each row's valid positions, >= 1."""
        mask = np.zeros_like(valid, dtype=bool)
        for row in range(valid.shape[0]):
            candidates = np.flatnonzero(valid[row])
            if candidates.size == 0:
                continue
            count = max(1, int(round(self.config.mlm_ratio * candidates.size)))
            picked = rng.choice(candidates, size=count, replace=False)
            mask[row, picked] = True
        return mask

    def training_loss(
        self, batch: ModelInputs, rng: np.random.Generator
    ) -> LossParts:
        cfg = self.config
        fused, _ = self.fuse(batch)
        if cfg.masking == MASKING_MLM:
            positions = self.sample_mask_positions(batch.valid, rng)
            fused = self._splice_mask_embedding(
                fused, positions[:, :, None].astype(np.float64)
            )
            hidden = self.encode(fused, batch.valid)
            rows, cols = np.nonzero(positions)
            cmd_t = batch.ids[rows, cols]
            type_t = batch.type_ids[rows, cols]
            target_t = batch.target_ids[rows, cols]
        else:
            hidden = self.encode(fused, batch.valid)
            both = batch.valid[:, :-1] & batch.valid[:, 1:]
            rows, cols = np.nonzero(both)
            cmd_t = batch.ids[rows, cols + 1]
            type_t = batch.type_ids[rows, cols + 1]
            target_t = batch.target_ids[rows, cols + 1]
        if rows.size == 0:
            raise ValueError("batch has no supervisable positions")
        cmd_logits, type_logits, target_logits = self._heads_at(hidden, rows, cols)
        gamma = cfg.focal_gamma
        l_cmd = focal_loss(cmd_logits, cmd_t, gamma=gamma)
        l_cls = focal_loss(type_logits, type_t, gamma=gamma)
        l_tgt = focal_loss(target_logits, target_t, gamma=gamma)
        total = l_cmd
        if cfg.aux_class_weight:
            total = total + cfg.aux_class_weight * l_cls
        if cfg.aux_target_weight:
            total = total + cfg.aux_target_weight * l_tgt
        return LossParts(
            total=total,
            command=float(l_cmd.data),
            type=float(l_cls.data),
            target=float(l_tgt.data),
        )

    # -- inference ----------------------------------------------------------

    def next_logits(
        self, batch: ModelInputs, replace_final: bool = False
    ) -> tuple[Tensor, Tensor, Tensor]:
        """Logits for the step following each row's observed context.

        Causal backbones read the hidden state at the last observed
        position. The bidirectional backbone predicts at an explicit mask
        slot: with ``replace_final`` the final observed position is
        overwritten (scoring that step), otherwise a fresh mask slot is
        appended after the context (predicting an unseen next step).
        """
        rows = np.arange(batch.batch_size)
        fused, _ = self.fuse(batch)
        if self.config.masking != MASKING_MLM:
            hidden = self.encode(fused, batch.valid)
            return self._heads_at(hidden, rows, batch.lengths - 1)
        if replace_final:
            cols = batch.lengths - 1
            one_hot = np.zeros(batch.valid.shape + (1,))
            one_hot[rows, cols, 0] = 1.0
            hidden = self.encode(self._splice_mask_embedding(fused, one_hot), batch.valid)
            return self._heads_at(hidden, rows, cols)
        n = batch.valid.shape[1]
        pad = Tensor(np.zeros((batch.batch_size, 1, fused.shape[-1]), dtype=fused.dtype))
        extended = concatenate([fused, pad], axis=1)
        cols = batch.lengths.copy()
        one_hot = np.zeros((batch.batch_size, n + 1, 1))
        one_hot[rows, cols, 0] = 1.0
        valid = np.concatenate([batch.valid, np.zeros((batch.batch_size, 1), bool)], axis=1)
        valid[rows, cols] = True
        hidden = self.encode(self._splice_mask_embedding(extended, one_hot), valid)
        return self._heads_at(hidden, rows, cols)

    def recommend_top_k(self, batch: ModelInputs, k: int) -> list[list[tuple[int, float]]]:
        """Top-k (dense command id, probability) per row, ties by id.

        Ids are the vocabulary's 0-based dense ids (the +1 shift is
        internal); the padding slot never appears in results.
        """
        if k < 0:
            raise ValueError("k must be >= 0")
        cmd_logits, _, _ = self.next_logits(batch)
        real_logits = cmd_logits.data[:, 1:]  # the padding slot is not a command
        probs = softmax(Tensor(real_logits), axis=-1).data
        out: list[list[tuple[int, float]]] = []
        for row in probs:
            order = np.lexsort((np.arange(row.shape[0]), -row))
            out.append([(int(i), float(row[i])) for i in order[:k]])
        return out
