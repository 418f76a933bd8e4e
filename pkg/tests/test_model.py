"""Feature encoding, fusion, recommendation heads, and training loop."""

from __future__ import annotations

import math

import numpy as np
import pytest

from bimflow.model import (
    ModelConfig,
    RecommenderModel,
    TrainerConfig,
    evaluate_model,
    ndcg_at_k,
    rank_of_truth,
    recall_at_k,
    train_model,
)
from bimflow.model.checkpoint import load_model, save_model
from bimflow.model.data import PAD_ID, FeatureEncoder, evaluation_batches, training_batches
from bimflow.model.training import Adam
from bimflow.container import read_checkpoint, write_checkpoint
from bimflow.nn import Tensor
from bimflow.types import CommandMeta, Dataset, InteractionSequence, Vocabulary


def micro_dataset(num_sessions: int = 24, length: int = 6) -> Dataset:
    names = ["Door", "Roof", "Wall"]
    eye = np.eye(4, dtype=np.float32)
    meta = {
        "Door": CommandMeta("Door", "inserts doors", "Create", "Door",
                            description_embedding=eye[0]),
        "Roof": CommandMeta("Roof", "builds roofs", "Create", "Roof",
                            description_embedding=eye[1]),
        "Wall": CommandMeta("Wall", "draws walls", "Modify", "Wall",
                            description_embedding=eye[2]),
    }
    sequences = []
    for k in range(num_sessions):
        ids = [k % 3]
        for _ in range(length - 1):
            ids.append((ids[-1] + 1) % 3)  # deterministic cycle, learnable
        sequences.append(
            InteractionSequence(
                session_id=f"s{k}",
                ids=ids,
                dt=[0.0] + [5.0] * (length - 1),
                occ=[1] * length,
                split="validation" if k % 6 == 5 else "train",
            )
        )
    return Dataset(
        vocabulary=Vocabulary.from_names(names),
        sequences=sequences,
        meta=meta,
        type_labels=["Create", "Modify"],
        target_labels=["Door", "Roof", "Wall"],
        norm_stats={"dt_mean": 4.0, "dt_std": 2.0, "occ_mean": 1.0, "occ_std": 1.0},
    )


def tiny_model(backbone: str = "decoder_only", **overrides) -> ModelConfig:
    base = dict(backbone=backbone, layers=1, dim=8, heads=2, description_dim=4)
    base.update(overrides)
    return ModelConfig(**base)


# -- feature encoder --------------------------------------------------------


def test_lookup_tables_shift_ids_past_the_padding_row():
    dataset = micro_dataset()
    encoder = FeatureEncoder(dataset)
    assert encoder.description_dim == 4  # inferred from the metadata
    # Row 0 is padding everywhere.
    assert encoder.type_of[0] == 0 and encoder.target_of[0] == 0
    assert np.array_equal(encoder.descriptions[0], np.zeros(4))
    # Dense id 0 = "Door" lands in row 1: type Create(+1), target Door(+1).
    assert encoder.type_of[1] == 1 and encoder.target_of[1] == 1
    assert encoder.type_of[3] == 2  # Wall -> Modify
    assert np.array_equal(encoder.descriptions[1], np.eye(4, dtype=np.float32)[0])


def test_unknown_labels_map_to_the_null_row():
    dataset = micro_dataset()
    dataset.meta["Door"] = CommandMeta("Door", "", "Alien", "Alien")
    encoder = FeatureEncoder(dataset)
    assert encoder.type_of[1] == 0 and encoder.target_of[1] == 0
    assert np.array_equal(encoder.descriptions[1], np.zeros(4))


def test_batches_pad_shift_and_normalize():
    dataset = micro_dataset()
    encoder = FeatureEncoder(dataset)
    seqs = [
        InteractionSequence("a", [2, 0, 1], [0.0, 6.0, 2.0], [1, 3, 1]),
        InteractionSequence("b", [1], [0.0], [2]),
    ]
    batch = encoder.encode_batch(seqs)
    assert batch.ids.shape == (2, 3)
    assert batch.ids.tolist() == [[3, 1, 2], [2, PAD_ID, PAD_ID]]
    assert batch.valid.tolist() == [[True, True, True], [True, False, False]]
    assert batch.lengths.tolist() == [3, 1]
    # dt z-normalized with (mean 4, std 2); occ with (mean 1, std 1).
    assert np.allclose(batch.continuous[0, :, 0], [-2.0, 1.0, -1.0])
    assert np.allclose(batch.continuous[0, :, 1], [0.0, 2.0, 0.0])
    assert np.allclose(batch.continuous[1, 1:], 0.0)  # padding stays zero
    assert batch.type_ids.tolist() == [[2, 1, 1], [1, 0, 0]]
    assert np.array_equal(batch.descriptions[1, 0], np.eye(4, dtype=np.float32)[1])


def test_empty_and_overlong_batches_are_rejected():
    encoder = FeatureEncoder(micro_dataset())
    with pytest.raises(ValueError):
        encoder.encode_batch([])
    long_seq = InteractionSequence("x", [0] * 9, [0.0] * 9, [1] * 9)
    with pytest.raises(ValueError):
        encoder.encode_batch([long_seq], max_len=8)


def test_training_batches_cover_every_sequence_deterministically():
    dataset = micro_dataset()
    encoder = FeatureEncoder(dataset)
    seqs = dataset.sequences

    def ids_seen(seed):
        batches = training_batches(seqs, encoder, 7, np.random.default_rng(seed))
        return [b.ids.tolist() for b in batches]

    assert ids_seen(1) == ids_seen(1)
    assert ids_seen(1) != ids_seen(2)
    assert len(ids_seen(1)) == math.ceil(len(seqs) / 7)
    assert sum(len(rows) for rows in ids_seen(1)) == len(seqs)


def test_evaluation_batches_bucket_by_length_and_keep_indices():
    dataset = micro_dataset()
    encoder = FeatureEncoder(dataset)
    seqs = [
        InteractionSequence("long", [0, 1, 2, 0], [0.0] * 4, [1] * 4),
        InteractionSequence("short", [1], [0.0], [1]),
        InteractionSequence("mid", [2, 0], [0.0, 1.0], [1, 1]),
    ]
    batches = evaluation_batches(seqs, encoder, batch_size=2)
    assert [idx for idx, _ in batches] == [[1, 2], [0]]
    assert batches[0][1].ids.shape[1] == 2  # padded to the bucket max only


# -- fusion and forward paths ----------------------------------------------


def test_fusion_outputs_and_pool_weights():
    dataset = micro_dataset()
    encoder = FeatureEncoder(dataset)
    model = RecommenderModel(tiny_model(), 3, 2, 3, np.random.default_rng(0))
    batch = encoder.encode_batch(dataset.sequences[:4])
    fused, weights = model.fuse(batch)
    assert fused.shape == (4, 6, 8)
    assert weights.shape == (4, 6, 5)
    assert np.allclose(weights.sum(axis=-1), 1.0, atol=1e-5)
    assert (weights > 0).all()


def test_sequences_beyond_the_length_budget_are_rejected():
    model = RecommenderModel(
        tiny_model(max_seq_len=4), 3, 2, 3, np.random.default_rng(0)
    )
    fused = Tensor(np.zeros((1, 5, 8), dtype=np.float32))
    with pytest.raises(ValueError):
        model.encode(fused, np.ones((1, 5), bool))


def test_model_rejects_an_empty_vocabulary():
    with pytest.raises(ValueError):
        RecommenderModel(tiny_model(), 0, 1, 1, np.random.default_rng(0))


def test_mask_sampling_respects_ratio_and_validity():
    model = RecommenderModel(
        tiny_model("encoder_only", mlm_ratio=0.25), 3, 2, 3, np.random.default_rng(0)
    )
    valid = np.zeros((2, 8), dtype=bool)
    valid[0, :8] = True
    valid[1, :2] = True
    positions = model.sample_mask_positions(valid, np.random.default_rng(5))
    assert positions[0].sum() == 2  # round(0.25 * 8)
    assert positions[1].sum() == 1  # floor would be 0; at least one
    assert not positions[~valid].any()


def test_next_logits_shapes_for_all_backbones():
    dataset = micro_dataset()
    encoder = FeatureEncoder(dataset)
    batch = encoder.encode_batch(dataset.sequences[:3])
    for backbone in ("encoder_only", "decoder_only", "decoder_moe"):
        model = RecommenderModel(
            tiny_model(backbone, num_experts=3, active_experts=2),
            3, 2, 3, np.random.default_rng(1),
        )
        cmd, typ, tgt = model.next_logits(batch)
        assert cmd.shape == (3, 4)  # vocabulary + padding slot
        assert typ.shape == (3, 3) and tgt.shape == (3, 4)
        if backbone == "encoder_only":
            replaced, _, _ = model.next_logits(batch, replace_final=True)
            assert replaced.shape == (3, 4)


# -- losses -----------------------------------------------------------------


def batch_of(dataset, rows):
    return FeatureEncoder(dataset).encode_batch(dataset.sequences[:rows])


def test_loss_composition_weights_the_auxiliary_heads():
    dataset = micro_dataset()
    model = RecommenderModel(tiny_model(), 3, 2, 3, np.random.default_rng(2))
    part = model.training_loss(batch_of(dataset, 4), np.random.default_rng(0))
    expected = part.command + 0.2 * part.type + 0.2 * part.target
    assert float(part.total.data) == pytest.approx(expected, rel=1e-5)


def test_zero_auxiliary_weights_reduce_the_total_to_the_command_loss():
    dataset = micro_dataset()
    model = RecommenderModel(
        tiny_model(aux_class_weight=0.0, aux_target_weight=0.0),
        3, 2, 3, np.random.default_rng(2),
    )
    part = model.training_loss(batch_of(dataset, 4), np.random.default_rng(0))
    assert float(part.total.data) == part.command  # the same object, bit for bit


def test_batches_without_successor_pairs_are_rejected():
    dataset = micro_dataset()
    encoder = FeatureEncoder(dataset)
    singles = [InteractionSequence("a", [0], [0.0], [1])]
    model = RecommenderModel(tiny_model(), 3, 2, 3, np.random.default_rng(2))
    with pytest.raises(ValueError):
        model.training_loss(encoder.encode_batch(singles), np.random.default_rng(0))


# -- recommendation ---------------------------------------------------------


def test_recommendations_exclude_padding_and_break_ties_by_id():
    dataset = micro_dataset()
    encoder = FeatureEncoder(dataset)
    model = RecommenderModel(tiny_model(), 3, 2, 3, np.random.default_rng(3))
    batch = encoder.encode_batch(dataset.sequences[:1])
    fixed = np.array([[9.0, 1.0, 2.0, 2.0]], dtype=np.float32)  # pad slot largest
    model.next_logits = lambda b, replace_final=False: (Tensor(fixed), None, None)
    recs = model.recommend_top_k(batch, 3)
    assert [i for i, _p in recs[0]] == [1, 2, 0]  # tie between ids 1 and 2
    probs = [p for _i, p in recs[0]]
    assert probs[0] == pytest.approx(probs[1])
    assert sum(probs) == pytest.approx(1.0, abs=1e-6)  # pad never in the softmax
    assert model.recommend_top_k(batch, 0) == [[]]
    with pytest.raises(ValueError):
        model.recommend_top_k(batch, -1)


def test_rank_of_truth_matches_sorting():
    rng = np.random.default_rng(6)
    for _ in range(300):
        c = int(rng.integers(2, 9))
        logits = rng.integers(-2, 3, size=c + 1).astype(np.float64)
        truth = int(rng.integers(1, c + 1))
        order = sorted(range(1, c + 1), key=lambda i: (-logits[i], i))
        assert rank_of_truth(logits, truth) == order.index(truth) + 1
    with pytest.raises(ValueError):
        rank_of_truth(np.zeros(4), 0)
    with pytest.raises(ValueError):
        rank_of_truth(np.zeros(4), 4)


def test_metric_helpers():
    assert recall_at_k(1, 1) == 1.0 and recall_at_k(2, 1) == 0.0
    assert ndcg_at_k(1, 5) == 1.0
    assert ndcg_at_k(2, 5) == pytest.approx(1.0 / math.log2(3.0), abs=1e-12)
    assert ndcg_at_k(6, 5) == 0.0


# -- training ---------------------------------------------------------------


def test_adam_learning_rate_decays_linearly():
    w = Tensor(np.array([1.0, 2.0], dtype=np.float32), requires_grad=True)
    opt = Adam([("w", w)], learning_rate=0.1, total_steps=4)
    assert opt.current_lr == pytest.approx(0.1)
    for expected in (0.075, 0.05, 0.025, 0.0):
        w.grad = np.array([1.0, -1.0], dtype=np.float32)
        before = w.data.copy()
        opt.step()
        assert opt.current_lr == pytest.approx(expected)
        assert w.data[0] < before[0] and w.data[1] > before[1]
    final = w.data.copy()
    w.grad = np.array([1.0, -1.0], dtype=np.float32)
    opt.step()  # lr is 0; parameters freeze
    assert np.array_equal(w.data, final)


def test_training_learns_the_cyclic_pattern():
    dataset = micro_dataset()
    model, encoder, log = train_model(
        dataset,
        tiny_model(),
        TrainerConfig(epochs=12, batch_size=8, learning_rate=1e-2, seed=0,
                      patience=20),
    )
    assert log.epochs[-1].train_loss < log.epochs[0].train_loss
    assert log.best_epoch >= 0
    best = min(e.validation_loss for e in log.epochs)
    assert log.epochs[log.best_epoch].validation_loss == best
    report = evaluate_model(
        model, encoder, dataset.split_sequences("validation"), ks=(1, 3),
        command_names=dataset.vocabulary.names(),
    )
    assert report.recall[1] == 1.0  # the cycle is fully predictable
    assert sum(v["count"] for v in report.per_command.values()) == report.instances


def test_early_stopping_restores_the_best_parameters():
    dataset = micro_dataset()
    model, encoder, log = train_model(
        dataset,
        tiny_model(),
        TrainerConfig(epochs=30, batch_size=8, learning_rate=5e-3, seed=0,
                      patience=0, min_delta=1e9),
    )
    # min_delta makes every epoch after the first look like no improvement.
    assert log.stopped_early and len(log.epochs) == 2 and log.best_epoch == 0
    from bimflow.model.training import _validation_loss
    restored = _validation_loss(
        model, encoder, dataset.split_sequences("validation"), 8, 0
    )
    assert restored == pytest.approx(log.epochs[0].validation_loss, rel=1e-6)


def test_evaluation_requires_contexts():
    dataset = micro_dataset()
    model, encoder, _ = train_model(
        dataset, tiny_model(), TrainerConfig(epochs=1, batch_size=8,
                                             learning_rate=1e-3, seed=0),
    )
    with pytest.raises(ValueError):
        evaluate_model(model, encoder, [InteractionSequence("a", [0], [0.0], [1])])


def test_markdown_table_lists_every_k():
    dataset = micro_dataset()
    model, encoder, _ = train_model(
        dataset, tiny_model(), TrainerConfig(epochs=1, batch_size=8,
                                             learning_rate=1e-3, seed=0),
    )
    report = evaluate_model(model, encoder, dataset.split_sequences("validation"),
                            ks=(3, 5))
    table = report.markdown_table("causal")
    assert "| causal |" in table and "Recall@3" in table and "NDCG@5" in table


# -- checkpointing ----------------------------------------------------------


def test_checkpoint_round_trip_reproduces_logits_exactly(tmp_path):
    dataset = micro_dataset()
    model, encoder, _ = train_model(
        dataset, tiny_model(), TrainerConfig(epochs=1, batch_size=8,
                                             learning_rate=1e-3, seed=0),
    )
    path = tmp_path / "model.ckpt"
    save_model(str(path), model, encoder, dataset.vocabulary,
               dataset.type_labels, dataset.target_labels,
               metrics={"recall@3": 1.0})
    loaded_model, loaded_encoder, vocab, header = load_model(str(path))
    assert vocab.names() == dataset.vocabulary.names()
    assert header["vocabulary_hash"] == dataset.vocabulary.content_hash()
    assert header["metrics"] == {"recall@3": 1.0}
    batch = encoder.encode_batch(dataset.sequences[:5])
    same_batch = loaded_encoder.encode_batch(dataset.sequences[:5])
    assert np.array_equal(batch.ids, same_batch.ids)
    assert np.array_equal(batch.continuous, same_batch.continuous)
    before, _, _ = model.next_logits(batch)
    after, _, _ = loaded_model.next_logits(same_batch)
    assert np.array_equal(before.data, after.data)


def test_checkpoint_with_missing_parameters_is_rejected(tmp_path):
    dataset = micro_dataset()
    model, encoder, _ = train_model(
        dataset, tiny_model(), TrainerConfig(epochs=1, batch_size=8,
                                             learning_rate=1e-3, seed=0),
    )
    full = tmp_path / "full.ckpt"
    save_model(str(full), model, encoder, dataset.vocabulary,
               dataset.type_labels, dataset.target_labels)
    header, tensors = read_checkpoint(str(full))
    victim = next(name for name in tensors if name.startswith("param."))
    del tensors[victim]
    header.pop("tensors", None)
    clipped = tmp_path / "clipped.ckpt"
    write_checkpoint(str(clipped), header, tensors)
    with pytest.raises(ValueError, match="missing"):
        load_model(str(clipped))
