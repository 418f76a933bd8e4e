"""Shared fixtures: the bundled sample corpus, providers, and a tiny trained
serving bundle that the service/CLI tests reuse instead of re-training."""

from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import pytest

from bimflow.docs import LabelRegistry, augment_vocabulary
from bimflow.features import FinalizeConfig, compute_features, finalize_dataset
from bimflow.logio import group_into_sessions, parse_log_stream
from bimflow.model.checkpoint import save_model
from bimflow.model.config import ModelConfig
from bimflow.model.training import TrainerConfig, train_model
from bimflow.providers import ProviderConfig, StubEmbedder, StubTextGenerator
from bimflow.types import Category, LogEntry, RawSession, category_for_prefix
from bimflow.workflows import encode_with_workflows, learn_workflows

FIXTURES = Path(__file__).parent / "fixtures"

EPOCH = datetime(2024, 3, 4, 9, 0, 0, tzinfo=timezone.utc)


def make_entry(
    message: str,
    prefix: str = "Tool",
    session_id: str = "s",
    seconds: float = 0.0,
    command_id: int = 0,
    language: str = "en",
    category: Category | None = None,
) -> LogEntry:
    """One log entry with compact defaults for hand-built sessions."""
    return LogEntry(
        session_id=session_id,
        timestamp=EPOCH + timedelta(seconds=seconds),
        category=category or category_for_prefix(prefix),
        prefix=prefix,
        message=message,
        command_id=command_id,
        language=language,
    )


def make_session(
    names: list[tuple[str, str]] | list[str],
    session_id: str = "s",
    step_seconds: float = 10.0,
) -> RawSession:
    """Session from (prefix, message) pairs (or bare Tool messages)."""
    entries = []
    for i, item in enumerate(names):
        prefix, message = item if isinstance(item, tuple) else ("Tool", item)
        entries.append(
            make_entry(message, prefix, session_id, seconds=i * step_seconds)
        )
    return RawSession(session_id, entries)


@pytest.fixture(scope="session")
def sample_corpus() -> list[RawSession]:
    with open(FIXTURES / "log_compare.jsonl", "rb") as fh:
        return group_into_sessions(parse_log_stream(fh))


@pytest.fixture(scope="session")
def align_providers() -> ProviderConfig:
    return ProviderConfig.from_toml(str(FIXTURES / "providers_align.toml"))


@pytest.fixture(scope="session")
def augment_providers() -> ProviderConfig:
    return ProviderConfig.from_toml(str(FIXTURES / "providers_augment.toml"))


def load_golden(name: str) -> list[RawSession]:
    with open(FIXTURES / "golden" / name, "rb") as fh:
        return group_into_sessions(parse_log_stream(fh))


def session_dicts(sessions: list[RawSession]) -> list[dict]:
    return [s.to_dict() for s in sessions]


# ---------------------------------------------------------------------------
# A small end-to-end domain: enough structure to train on in seconds, with a
# learnable workflow, so service/CLI tests exercise a real checkpoint.
# ---------------------------------------------------------------------------

TINY_COMMANDS = ["Symbol", "Door Tool", "Save", "Create Line"]
TINY_IDS = {"Symbol": 300, "Door Tool": 302, "Save": 305, "Create Line": 166}


def tiny_sessions(count: int = 48, seed: int = 7) -> list[RawSession]:
    """Sessions where "Symbol" is usually followed by "Door Tool"."""
    rng = np.random.default_rng(seed)
    sessions = []
    for s in range(count):
        names: list[str] = []
        while len(names) < 8:
            if rng.random() < 0.5:
                names.extend(["Symbol", "Door Tool"])
            else:
                names.append(str(rng.choice(["Save", "Create Line"])))
        entries = [
            make_entry(
                name,
                session_id=f"tiny-{s:03d}",
                seconds=i * 10.0,
                command_id=TINY_IDS[name],
            )
            for i, name in enumerate(names)
        ]
        sessions.append(RawSession(f"tiny-{s:03d}", entries))
    return sessions


@pytest.fixture(scope="session")
def tiny_artifacts(tmp_path_factory: pytest.TempPathFactory) -> dict:
    """Train a small checkpoint and bundle its serving assets on disk.

    Returns paths plus the in-memory dataset/model for direct assertions.
    """
    root = tmp_path_factory.mktemp("tiny")
    sessions = tiny_sessions()
    bpe, performed = learn_workflows(sessions, num_merges=1)
    assert performed == 1 and bpe.merges[0] == ("Symbol", "Door Tool")
    unified = [encode_with_workflows(s, bpe) for s in sessions]

    featureized = [(s.session_id, compute_features(s)) for s in unified]
    dataset, _report = finalize_dataset(
        featureized,
        FinalizeConfig(min_session_len=3, min_command_count=5, max_seq_len=110),
    )

    meta, types, targets = augment_vocabulary(
        [n for n in dataset.vocabulary.names() if n not in bpe.workflows()],
        bpe.workflows(),
        chunks=[],
        generator=StubTextGenerator(),
        embedder=StubEmbedder(dimension=8),
    )
    dataset.meta = {n: m for n, m in meta.items() if n in dataset.vocabulary.index}
    order_types = LabelRegistry()
    order_targets = LabelRegistry()
    for command in dataset.vocabulary.items:
        m = dataset.meta.get(command.name)
        if m is not None:
            order_types.intern(m.type_label)
            order_targets.intern(m.target_label)
    dataset.type_labels = list(order_types.labels)
    dataset.target_labels = list(order_targets.labels)

    model, encoder, log = train_model(
        dataset,
        ModelConfig(backbone="decoder_only", layers=1, dim=16, heads=2),
        TrainerConfig(epochs=2, batch_size=16, learning_rate=1e-3, seed=11),
    )
    checkpoint = root / "model.ckpt"
    save_model(
        str(checkpoint),
        model,
        encoder,
        dataset.vocabulary,
        dataset.type_labels,
        dataset.target_labels,
        training_log=log.to_dict(),
    )

    assets = root / "assets"
    assets.mkdir()
    (assets / "rules.toml").write_text("[filter]\n", encoding="utf-8")
    with open(assets / "dictionary.jsonl", "w", encoding="utf-8") as fh:
        for name, cid in TINY_IDS.items():
            fh.write(
                json.dumps(
                    {"name": name, "id": cid, "canonical": name,
                     "provenance": "direct-centroid"},
                    ensure_ascii=False,
                )
                + "\n"
            )
    (assets / "mapping.jsonl").write_text("", encoding="utf-8")
    bpe.save(str(assets / "workflows.json"))
    (assets / "manifest.json").write_text(
        json.dumps(
            {
                "vocabulary_hash": dataset.vocabulary.content_hash(),
                "vocabulary_size": len(dataset.vocabulary),
            }
        ),
        encoding="utf-8",
    )

    return {
        "root": root,
        "checkpoint": checkpoint,
        "assets": assets,
        "dataset": dataset,
        "bpe": bpe,
        "model": model,
        "encoder": encoder,
    }
