"""Model checkpoint save/load on the shared binary container.

A checkpoint carries everything needed to serve recommendations without
the training dataset: the architecture config, the vocabulary (names in
dense-id order) and its hash, the label registries, normalization stats,
a metric snapshot, every learned parameter, and the fixed per-command
lookup tables (type, target, description embedding).
"""

from __future__ import annotations

import numpy as np

from ..container import read_checkpoint, write_checkpoint
from ..types import Vocabulary
from .config import ModelConfig
from .data import FeatureEncoder
from .network import RecommenderModel

_PARAM_PREFIX = "param."
_TABLE_PREFIX = "table."


def save_model(
    path: str,
    model: RecommenderModel,
    encoder: FeatureEncoder,
    vocabulary: Vocabulary,
    type_labels: list[str],
    target_labels: list[str],
    metrics: dict | None = None,
    training_log: dict | None = None,
) -> None:
    header = {
        "model_config": model.config.to_dict(),
        "vocabulary": vocabulary.to_dict(),
        "vocabulary_hash": vocabulary.content_hash(),
        "type_labels": list(type_labels),
        "target_labels": list(target_labels),
        "norm_stats": {
            "dt_mean": encoder.dt_mean,
            "dt_std": encoder.dt_std,
            "occ_mean": encoder.occ_mean,
            "occ_std": encoder.occ_std,
        },
        "metrics": metrics or {},
        "training_log": training_log or {},
    }
    tensors: dict[str, np.ndarray] = {
        _PARAM_PREFIX + name: tensor.data for name, tensor in model.parameters()
    }
    tensors[_TABLE_PREFIX + "type_of"] = encoder.type_of
    tensors[_TABLE_PREFIX + "target_of"] = encoder.target_of
    tensors[_TABLE_PREFIX + "descriptions"] = encoder.descriptions
    write_checkpoint(path, header, tensors)


def load_model(
    path: str,
) -> tuple[RecommenderModel, FeatureEncoder, Vocabulary, dict]:
    header, tensors = read_checkpoint(path)
    config = ModelConfig.from_dict(header["model_config"])
    vocabulary = Vocabulary.from_dict(header["vocabulary"])
    type_labels = list(header["type_labels"])
    target_labels = list(header["target_labels"])

    model = RecommenderModel(
        config,
        len(vocabulary.items),
        len(type_labels),
        len(target_labels),
        np.random.default_rng(0),
    )
    loaded = {
        name[len(_PARAM_PREFIX) :]: arr
        for name, arr in tensors.items()
        if name.startswith(_PARAM_PREFIX)
    }
    expected = dict(model.parameters())
    missing = sorted(set(expected) - set(loaded))
    extra = sorted(set(loaded) - set(expected))
    if missing or extra:
        raise ValueError(
            f"checkpoint parameter mismatch: missing={missing[:5]} extra={extra[:5]}"
        )
    for name, tensor in expected.items():
        arr = loaded[name]
        if tuple(arr.shape) != tensor.shape:
            raise ValueError(
                f"checkpoint tensor {name!r} has shape {arr.shape}, "
                f"expected {tensor.shape}"
            )
        tensor.data = arr

    encoder = FeatureEncoder.__new__(FeatureEncoder)
    encoder.vocabulary_size = len(vocabulary.items)
    encoder.num_types = len(type_labels)
    encoder.num_targets = len(target_labels)
    encoder.type_of = tensors[_TABLE_PREFIX + "type_of"]
    encoder.target_of = tensors[_TABLE_PREFIX + "target_of"]
    encoder.descriptions = tensors[_TABLE_PREFIX + "descriptions"]
    encoder.description_dim = int(encoder.descriptions.shape[1])
    stats = header.get("norm_stats", {})
    encoder.dt_mean = float(stats.get("dt_mean", 0.0))
    encoder.dt_std = max(float(stats.get("dt_std", 1.0)), 1e-8)
    encoder.occ_mean = float(stats.get("occ_mean", 0.0))
    encoder.occ_std = max(float(stats.get("occ_std", 1.0)), 1e-8)
    return model, encoder, vocabulary, header
