"""Batch assembly for training, evaluation, and live inference.

Command, type, and target ids are shifted by +1 before entering the
model so id 0 can serve as padding everywhere; the vocabulary itself
stays 0-based. Continuous features are z-normalized with the training
split's statistics. Description embeddings are looked up from a fixed
matrix built out of the augmented metadata (zero rows where absent).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..types import Dataset, InteractionSequence

PAD_ID = 0


@dataclass
class ModelInputs:
    """One padded batch of shifted id arrays and dense features."""

    ids: np.ndarray  # [B, n] int64, 0 = padding
    type_ids: np.ndarray  # [B, n] int64
    target_ids: np.ndarray  # [B, n] int64
    continuous: np.ndarray  # [B, n, 2] float32 (normalized dt, occ)
    descriptions: np.ndarray  # [B, n, d_desc] float32
    valid: np.ndarray  # [B, n] bool
    lengths: np.ndarray  # [B] int64

    @property
    def batch_size(self) -> int:
        return self.ids.shape[0]


class FeatureEncoder:
    """Precomputed per-command lookup tables for a dataset's vocabulary."""

    def __init__(self, dataset: Dataset, description_dim: int | None = None):
        vocab = dataset.vocabulary
        size = len(vocab.items)
        self.vocabulary_size = size
        self.num_types = len(dataset.type_labels)
        self.num_targets = len(dataset.target_labels)
        type_index = {label: i for i, label in enumerate(dataset.type_labels)}
        target_index = {label: i for i, label in enumerate(dataset.target_labels)}

        self.type_of = np.zeros(size + 1, dtype=np.int64)
        self.target_of = np.zeros(size + 1, dtype=np.int64)
        inferred_dim = description_dim
        for name, meta in dataset.meta.items():
            if meta.description_embedding is not None and inferred_dim is None:
                inferred_dim = int(meta.description_embedding.shape[0])
        self.description_dim = inferred_dim if inferred_dim else 8
        self.descriptions = np.zeros((size + 1, self.description_dim), dtype=np.float32)
        for cmd_id, command in enumerate(vocab.items):
            meta = dataset.meta.get(command.name)
            if meta is None:
                continue
            if meta.type_label in type_index:
                self.type_of[cmd_id + 1] = type_index[meta.type_label] + 1
            if meta.target_label in target_index:
                self.target_of[cmd_id + 1] = target_index[meta.target_label] + 1
            emb = meta.description_embedding
            if emb is not None and emb.shape[0] == self.description_dim:
                self.descriptions[cmd_id + 1] = emb.astype(np.float32)

        stats = dataset.norm_stats or {}
        self.dt_mean = float(stats.get("dt_mean", 0.0))
        self.dt_std = max(float(stats.get("dt_std", 1.0)), 1e-8)
        self.occ_mean = float(stats.get("occ_mean", 0.0))
        self.occ_std = max(float(stats.get("occ_std", 1.0)), 1e-8)

    def normalize_continuous(self, dt: np.ndarray, occ: np.ndarray) -> np.ndarray:
        out = np.stack(
            [
                (np.asarray(dt, np.float32) - self.dt_mean) / self.dt_std,
                (np.asarray(occ, np.float32) - self.occ_mean) / self.occ_std,
            ],
            axis=-1,
        )
        return out.astype(np.float32)

    def encode_batch(
        self, sequences: list[InteractionSequence], max_len: int | None = None
    ) -> ModelInputs:
        if not sequences:
            raise ValueError("cannot build an empty batch")
        lengths = np.array([len(s.ids) for s in sequences], dtype=np.int64)
        n = int(lengths.max())
        if max_len is not None and n > max_len:
            raise ValueError(f"sequence length {n} exceeds maximum {max_len}")
        batch = len(sequences)
        ids = np.full((batch, n), PAD_ID, dtype=np.int64)
        continuous = np.zeros((batch, n, 2), dtype=np.float32)
        valid = np.zeros((batch, n), dtype=bool)
        for row, seq in enumerate(sequences):
            k = lengths[row]
            ids[row, :k] = np.asarray(seq.ids, dtype=np.int64) + 1
            continuous[row, :k] = self.normalize_continuous(seq.dt, seq.occ)
            valid[row, :k] = True
        type_ids = self.type_of[ids]
        target_ids = self.target_of[ids]
        descriptions = self.descriptions[ids]
        return ModelInputs(
            ids=ids,
            type_ids=type_ids,
            target_ids=target_ids,
            continuous=continuous,
            descriptions=descriptions,
            valid=valid,
            lengths=lengths,
        )


def training_batches(
    sequences: list[InteractionSequence],
    encoder: FeatureEncoder,
    batch_size: int,
    rng: np.random.Generator,
    max_len: int | None = None,
) -> list[ModelInputs]:
    """Seeded shuffle, then contiguous batches padded to their own maxima."""
    order = rng.permutation(len(sequences))
    shuffled = [sequences[i] for i in order]
    return [
        encoder.encode_batch(shuffled[i : i + batch_size], max_len=max_len)
        for i in range(0, len(shuffled), batch_size)
    ]


def evaluation_batches(
    sequences: list[InteractionSequence],
    encoder: FeatureEncoder,
    batch_size: int,
) -> list[tuple[list[int], ModelInputs]]:
    """Length-bucketed batches, each paired with original sequence indices.

    Bucketing only reduces padding waste; per-sequence metrics are
    independent, so the grouping has no effect on reported numbers.
    """
    order = sorted(range(len(sequences)), key=lambda i: len(sequences[i].ids))
    out = []
    for i in range(0, len(order), batch_size):
        idx = order[i : i + batch_size]
        out.append((idx, encoder.encode_batch([sequences[j] for j in idx])))
    return out
