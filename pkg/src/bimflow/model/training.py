"""Mini-batch training with Adam, linear LR decay, and early stopping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..types import Dataset
from .config import ModelConfig
from .data import FeatureEncoder, training_batches
from .network import RecommenderModel


@dataclass
class TrainerConfig:
    epochs: int = 10
    batch_size: int = 128
    learning_rate: float = 3e-5
    seed: int = 42
    patience: int = 2
    min_delta: float = 0.0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    validation_loss: float
    learning_rate: float


@dataclass
class TrainingLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return {
            "epochs": [vars(e) for e in self.epochs],
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
        }


class Adam:
    def __init__(
        self,
        parameters: list[tuple[str, object]],
        learning_rate: float,
        total_steps: int,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.parameters = parameters
        self.base_lr = learning_rate
        self.total_steps = max(total_steps, 1)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in parameters}
        self.v = {name: np.zeros_like(t.data) for name, t in parameters}

    @property
    def current_lr(self) -> float:
        remaining = max(0.0, 1.0 - self.step_count / self.total_steps)
        return self.base_lr * remaining

    def step(self) -> None:
        lr = self.current_lr
        self.step_count += 1
        t = self.step_count
        for name, param in self.parameters:
            grad = param.grad
            if grad is None:
                continue
            m = self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * grad
            v = self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * grad**2
            m_hat = m / (1 - self.beta1**t)
            v_hat = v / (1 - self.beta2**t)
            param.data = param.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _validation_loss(
    model: RecommenderModel,
    encoder: FeatureEncoder,
    sequences,
    batch_size: int,
    seed: int,
) -> float:
    # A fixed seed keeps the masked-position draw (bidirectional kind)
    # identical across epochs so validation losses are comparable.
    rng = np.random.default_rng(seed)
    order_rng = np.random.default_rng(seed)
    losses = []
    for batch in training_batches(sequences, encoder, batch_size, order_rng):
        part = model.training_loss(batch, rng)
        losses.append(float(part.total.data) * batch.batch_size)
    total = sum(losses)
    return total / len(sequences)


def train_model(
    dataset: Dataset,
    model_config: ModelConfig,
    trainer: TrainerConfig,
) -> tuple[RecommenderModel, FeatureEncoder, TrainingLog]:
    encoder = FeatureEncoder(dataset, description_dim=None)
    if model_config.description_dim != encoder.description_dim:
        model_config = ModelConfig.from_dict(
            {**model_config.to_dict(), "description_dim": encoder.description_dim}
        )
    rng = np.random.default_rng(trainer.seed)
    model = RecommenderModel(
        model_config,
        encoder.vocabulary_size,
        encoder.num_types,
        encoder.num_targets,
        rng,
    )
    train_seqs = [s for s in dataset.sequences if s.split == "train"]
    val_seqs = [s for s in dataset.sequences if s.split == "validation"]
    if not train_seqs:
        raise ValueError("training split is empty")

    params = list(model.parameters())
    steps_per_epoch = math.ceil(len(train_seqs) / trainer.batch_size)
    optimizer = Adam(
        params, trainer.learning_rate, total_steps=trainer.epochs * steps_per_epoch
    )
    log = TrainingLog()
    best_loss = math.inf
    best_state: dict[str, np.ndarray] | None = None
    bad_epochs = 0

    for epoch in range(trainer.epochs):
        epoch_rng = np.random.default_rng(trainer.seed + 1000 * (epoch + 1))
        epoch_losses = []
        for batch in training_batches(
            train_seqs, encoder, trainer.batch_size, epoch_rng, model_config.max_seq_len
        ):
            model.zero_grad()
            part = model.training_loss(batch, epoch_rng)
            value = float(part.total.data)
            if not math.isfinite(value):
                raise RuntimeError(
                    f"training diverged at epoch {epoch}: loss={value} "
                    f"(lr={optimizer.current_lr:.2e}, step={optimizer.step_count})"
                )
            part.total.backward()
            optimizer.step()
            epoch_losses.append(value * batch.batch_size)
        train_loss = sum(epoch_losses) / len(train_seqs)
        if val_seqs:
            val_loss = _validation_loss(
                model, encoder, val_seqs, trainer.batch_size, trainer.seed
            )
        else:
            val_loss = train_loss
        log.epochs.append(
            EpochRecord(
                epoch=epoch,
                train_loss=train_loss,
                validation_loss=val_loss,
                learning_rate=optimizer.current_lr,
            )
        )
        if val_loss < best_loss - trainer.min_delta:
            best_loss = val_loss
            log.best_epoch = epoch
            best_state = {name: np.array(t.data, copy=True) for name, t in params}
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > trainer.patience:
                log.stopped_early = True
                break

    if best_state is not None:
        for name, tensor in params:
            tensor.data = best_state[name]
    return model, encoder, log
