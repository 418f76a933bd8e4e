"""Model hyperparameter configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

BACKBONE_KINDS = ("encoder_only", "decoder_only", "decoder_moe")
MASKING_CLM = "clm"
MASKING_MLM = "mlm"


@dataclass
class ModelConfig:
    """Architecture settings for the recommender network.

    The masking strategy is a function of the backbone: the bidirectional
    encoder trains with masked-language-style objectives, the causal
    decoders with next-step prediction.
    """

    backbone: str = "decoder_only"
    layers: int = 2
    dim: int = 64
    heads: int = 4
    kv_groups: int | None = None
    ffn_hidden: int | None = None
    num_experts: int = 8
    active_experts: int = 2
    mlm_ratio: float = 0.15
    max_seq_len: int = 110
    focal_gamma: float = 2.0
    aux_class_weight: float = 0.2
    aux_target_weight: float = 0.2
    description_dim: int = 8

    def __post_init__(self) -> None:
        if self.backbone not in BACKBONE_KINDS:
            raise ValueError(f"unknown backbone {self.backbone!r}")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.dim % self.heads:
            raise ValueError("dim must divide evenly into heads")
        if self.kv_groups is not None and self.heads % self.kv_groups:
            raise ValueError("kv_groups must divide heads")
        if not 0.0 < self.mlm_ratio < 1.0:
            raise ValueError("mlm_ratio must be in (0, 1)")
        if self.aux_class_weight < 0 or self.aux_target_weight < 0:
            raise ValueError("auxiliary loss weights must be >= 0")

    @property
    def masking(self) -> str:
        return MASKING_MLM if self.backbone == "encoder_only" else MASKING_CLM

    @property
    def hidden(self) -> int:
        return self.ffn_hidden if self.ffn_hidden is not None else 4 * self.dim

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, payload: dict) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in payload.items() if k in known})
