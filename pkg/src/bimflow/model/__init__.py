"""Sequence recommendation model: feature fusion, backbones, training."""

from .config import ModelConfig
from .network import RecommenderModel
from .metrics import EvaluationReport, evaluate_model, ndcg_at_k, recall_at_k, rank_of_truth
from .training import TrainerConfig, TrainingLog, train_model

__all__ = [
    "EvaluationReport",
    "ModelConfig",
    "RecommenderModel",
    "TrainerConfig",
    "TrainingLog",
    "evaluate_model",
    "ndcg_at_k",
    "rank_of_truth",
    "recall_at_k",
    "train_model",
]
