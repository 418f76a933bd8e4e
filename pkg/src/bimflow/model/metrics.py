"""Ranking metrics and the evaluation protocol.

Recall@K is the fraction of test instances whose ground-truth command
ranks within the top K. NDCG@K applies the logarithmic discount
``1 / log2(rank + 1)`` with an ideal DCG of 1 (single relevant item), so
rank 1 scores 1.0, rank 2 scores ``1/log2(3)``, and ranks beyond K score
0. Ties in logits are broken by dense command id, keeping evaluation
deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..types import Dataset, InteractionSequence
from .config import MASKING_MLM
from .data import FeatureEncoder, ModelInputs, evaluation_batches


def rank_of_truth(logits: np.ndarray, truth: int) -> int:
    """1-based rank of ``truth`` among real commands (index 0 = padding).

    A command outranks the truth if its logit is strictly greater, or
    equal with a smaller dense id.
    """
    if truth < 1 or truth >= logits.shape[0]:
        raise ValueError("truth id outside the command range")
    real = logits[1:]
    t = truth - 1
    better = int(np.sum(real > real[t]))
    tied_before = int(np.sum(real[:t] == real[t]))
    return 1 + better + tied_before


def recall_at_k(rank: int, k: int) -> float:
    return 1.0 if rank <= k else 0.0


def ndcg_at_k(rank: int, k: int) -> float:
    if rank > k:
        return 0.0
    return 1.0 / math.log2(rank + 1)


@dataclass
class EvaluationReport:
    instances: int
    recall: dict[int, float]
    ndcg: dict[int, float]
    per_command: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "instances": self.instances,
            "recall": {str(k): v for k, v in self.recall.items()},
            "ndcg": {str(k): v for k, v in self.ndcg.items()},
            "per_command": self.per_command,
        }

    def markdown_table(self, label: str = "model") -> str:
        ks = sorted(self.recall)
        header = (
            "| Model | "
            + " | ".join(f"Recall@{k}" for k in ks)
            + " | "
            + " | ".join(f"NDCG@{k}" for k in ks)
            + " |"
        )
        rule = "|" + "---|" * (1 + 2 * len(ks))
        row = (
            f"| {label} | "
            + " | ".join(f"{self.recall[k]:.4f}" for k in ks)
            + " | "
            + " | ".join(f"{self.ndcg[k]:.4f}" for k in ks)
            + " |"
        )
        return "\n".join([header, rule, row])


def evaluate_model(
    model,
    encoder: FeatureEncoder,
    sequences: list[InteractionSequence],
    ks: tuple[int, ...] = (3, 5, 10),
    batch_size: int = 128,
    command_names: list[str] | None = None,
) -> EvaluationReport:
    """Score final-position prediction over ``sequences``.

    Each sequence's last command is the ground truth; the model sees the
    preceding steps (causal kinds) or the full sequence with the final
    fused vector replaced by the mask embedding (bidirectional kind).
    """
    usable = [s for s in sequences if len(s.ids) >= 2]
    if not usable:
        raise ValueError("no sequences of length >= 2 to evaluate")
    mlm = model.config.masking == MASKING_MLM
    truths = np.array([s.ids[-1] + 1 for s in usable], dtype=np.int64)
    if mlm:
        contexts = usable
    else:
        contexts = [
            InteractionSequence(
                session_id=s.session_id,
                ids=s.ids[:-1],
                dt=s.dt[:-1],
                occ=s.occ[:-1],
                split=s.split,
            )
            for s in usable
        ]
    ranks = np.zeros(len(usable), dtype=np.int64)
    for idx, batch in evaluation_batches(contexts, encoder, batch_size):
        cmd_logits, _, _ = model.next_logits(batch, replace_final=mlm)
        for row, seq_i in enumerate(idx):
            ranks[seq_i] = rank_of_truth(cmd_logits.data[row], int(truths[seq_i]))

    recall = {k: float(np.mean([recall_at_k(r, k) for r in ranks])) for k in ks}
    ndcg = {k: float(np.mean([ndcg_at_k(r, k) for r in ranks])) for k in ks}
    per_command: dict[str, dict] = {}
    if command_names is not None:
        buckets: dict[int, list[int]] = {}
        for r, t in zip(ranks, truths):
            buckets.setdefault(int(t) - 1, []).append(int(r))
        for dense_id, rs in sorted(buckets.items()):
            per_command[command_names[dense_id]] = {
                "count": len(rs),
                **{f"recall@{k}": float(np.mean([recall_at_k(r, k) for r in rs])) for k in ks},
            }
    return EvaluationReport(
        instances=len(usable), recall=recall, ndcg=ndcg, per_command=per_command
    )
