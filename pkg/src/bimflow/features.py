"""Statistical features and dataset finalization.

Each unified session becomes a sequence of steps: consecutive duplicate
commands collapse into one step carrying its run length, and every step
records the seconds elapsed since the previous step. Finalization then
filters short sessions and rare commands, splits overlong sessions into
bounded subsequences, assigns a train/validation split that covers the
whole vocabulary on both sides, and freezes normalization statistics from
the training split.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Any

import numpy as np

from .types import Dataset, InteractionSequence, RawSession, Vocabulary


@dataclass
class FeatureStep:
    """One collapsed interaction step.

    ``timestamp`` is the run's last entry time, so the interval to the next
    step measures idle time after the action finished repeating.
    """

    name: str
    timestamp: datetime
    occurrences: int


def compute_features(session: RawSession) -> list[FeatureStep]:
    """Collapse consecutive duplicate commands into occurrence-counted steps."""
    steps: list[FeatureStep] = []
    for entry in session.entries:
        if steps and steps[-1].name == entry.message:
            steps[-1].occurrences += 1
            steps[-1].timestamp = entry.timestamp
        else:
            steps.append(FeatureStep(entry.message, entry.timestamp, 1))
    return steps


def intervals(steps: list[FeatureStep]) -> list[float]:
    """Seconds between consecutive steps; the first step gets 0."""
    out = [0.0]
    for prev, cur in zip(steps, steps[1:]):
        delta = (cur.timestamp - prev.timestamp).total_seconds()
        out.append(max(delta, 0.0))
    return out


@dataclass
class FinalizeConfig:
    min_session_len: int = 5
    min_command_count: int = 10
    max_seq_len: int = 110
    min_subseq_len: int = 10
    train_fraction: float = 0.85
    seed: int = 42

    def to_dict(self) -> dict[str, Any]:
        return {
            "min_session_len": self.min_session_len,
            "min_command_count": self.min_command_count,
            "max_seq_len": self.max_seq_len,
            "min_subseq_len": self.min_subseq_len,
            "train_fraction": self.train_fraction,
            "seed": self.seed,
        }


@dataclass
class SplitReport:
    """What the split-repair pass had to do to cover the vocabulary twice."""

    moved_to_validation: list[str] = field(default_factory=list)
    moved_to_train: list[str] = field(default_factory=list)
    duplicated: list[str] = field(default_factory=list)
    dropped_sessions_short: int = 0
    dropped_steps_rare: int = 0
    subsequences_created: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "moved_to_validation": self.moved_to_validation,
            "moved_to_train": self.moved_to_train,
            "duplicated": self.duplicated,
            "dropped_sessions_short": self.dropped_sessions_short,
            "dropped_steps_rare": self.dropped_steps_rare,
            "subsequences_created": self.subsequences_created,
        }


def _split_overlong(
    session_id: str,
    steps: list[FeatureStep],
    config: FinalizeConfig,
    rng: np.random.Generator,
    report: SplitReport,
) -> list[tuple[str, list[FeatureStep]]]:
    """Cut an overlong step list into random-length ordered subsequences.

    Each piece is between ``min_subseq_len`` and ``max_seq_len`` long, and
    concatenating the pieces reproduces the original order.
    """
    if len(steps) <= config.max_seq_len:
        return [(session_id, steps)]
    pieces: list[tuple[str, list[FeatureStep]]] = []
    remaining = steps
    part = 0
    while len(remaining) > config.max_seq_len:
        length = int(rng.integers(config.min_subseq_len, config.max_seq_len + 1))
        # Never leave a tail shorter than the minimum subsequence length.
        if len(remaining) - length < config.min_subseq_len:
            length = len(remaining) - config.min_subseq_len
        pieces.append((f"{session_id}#{part}", remaining[:length]))
        remaining = remaining[length:]
        part += 1
    pieces.append((f"{session_id}#{part}", remaining))
    report.subsequences_created += len(pieces)
    return pieces


def _names_by_split(sequences: list[InteractionSequence], vocab: Vocabulary) -> tuple[dict[int, int], dict[int, int]]:
    train_counts: dict[int, int] = {}
    val_counts: dict[int, int] = {}
    for seq in sequences:
        bucket = train_counts if seq.split == "train" else val_counts
        for cid in set(seq.ids):
            bucket[cid] = bucket.get(cid, 0) + 1
    return train_counts, val_counts


def _repair_split(
    sequences: list[InteractionSequence],
    vocab: Vocabulary,
    report: SplitReport,
) -> list[InteractionSequence]:
    """Ensure every vocabulary item appears in both splits.

    Prefers moving a sequence whose departure leaves its source split still
    covering all its items; falls back to duplicating the sequence into the
    starved split when no safe move exists (flagged in the report).
    """
    for target_split in ("validation", "train"):
        source_split = "train" if target_split == "validation" else "validation"
        changed = True
        while changed:
            changed = False
            train_counts, val_counts = _names_by_split(sequences, vocab)
            target_counts = val_counts if target_split == "validation" else train_counts
            source_counts = train_counts if target_split == "validation" else val_counts
            missing = [cid for cid in range(len(vocab)) if target_counts.get(cid, 0) == 0]
            for cid in missing:
                holders = [
                    s for s in sequences
                    if s.split == source_split and cid in set(s.ids)
                ]
                if not holders:
                    continue
                holders.sort(key=lambda s: (len(s), s.session_id))
                movable = None
                for candidate in holders:
                    if all(source_counts.get(c, 0) >= 2 for c in set(candidate.ids)):
                        movable = candidate
                        break
                name = vocab.name_of(cid)
                if movable is not None:
                    movable.split = target_split
                    if target_split == "validation":
                        report.moved_to_validation.append(name)
                    else:
                        report.moved_to_train.append(name)
                else:
                    donor = holders[0]
                    sequences.append(
                        InteractionSequence(
                            session_id=f"{donor.session_id}+dup",
                            ids=list(donor.ids),
                            dt=list(donor.dt),
                            occ=list(donor.occ),
                            split=target_split,
                        )
                    )
                    report.duplicated.append(name)
                changed = True
                break
    return sequences


def finalize_dataset(
    featureized: list[tuple[str, list[FeatureStep]]],
    config: FinalizeConfig,
) -> tuple[Dataset, SplitReport]:
    """Assemble the final dataset from per-session feature steps."""
    report = SplitReport()
    rng = np.random.default_rng(config.seed)

    # Short-session filter, then the corpus-wide rarity filter (which can
    # re-shorten sessions, so the length filter runs again afterwards).
    kept = []
    for session_id, steps in featureized:
        if len(steps) < config.min_session_len:
            report.dropped_sessions_short += 1
            continue
        kept.append((session_id, steps))

    counts: dict[str, int] = {}
    for _sid, steps in kept:
        for step in steps:
            counts[step.name] = counts.get(step.name, 0) + step.occurrences
    frequent = {name for name, count in counts.items() if count >= config.min_command_count}

    refiltered = []
    for session_id, steps in kept:
        dense = [s for s in steps if s.name in frequent]
        report.dropped_steps_rare += len(steps) - len(dense)
        if len(dense) < config.min_session_len:
            report.dropped_sessions_short += 1
            continue
        refiltered.append((session_id, dense))

    names = sorted({step.name for _sid, steps in refiltered for step in steps})
    vocab = Vocabulary.from_names(names)

    pieces: list[tuple[str, list[FeatureStep]]] = []
    for session_id, steps in refiltered:
        pieces.extend(_split_overlong(session_id, steps, config, rng, report))

    sequences: list[InteractionSequence] = []
    for session_id, steps in pieces:
        dts = intervals(steps)
        sequences.append(
            InteractionSequence(
                session_id=session_id,
                ids=[vocab.id_of(s.name) for s in steps],
                dt=dts,
                occ=[s.occurrences for s in steps],
                split="train",
            )
        )

    order = rng.permutation(len(sequences))
    n_train = int(round(config.train_fraction * len(sequences)))
    for rank, idx in enumerate(order):
        sequences[int(idx)].split = "train" if rank < n_train else "validation"

    sequences = _repair_split(sequences, vocab, report)

    train_dt = [v for s in sequences if s.split == "train" for v in s.dt]
    train_occ = [v for s in sequences if s.split == "train" for v in s.occ]
    norm_stats = {
        "dt_mean": float(np.mean(train_dt)) if train_dt else 0.0,
        "dt_std": float(max(np.std(train_dt), 1e-8)) if train_dt else 1.0,
        "occ_mean": float(np.mean(train_occ)) if train_occ else 0.0,
        "occ_std": float(max(np.std(train_occ), 1e-8)) if train_occ else 1.0,
    }

    dataset = Dataset(
        vocabulary=vocab,
        sequences=sequences,
        norm_stats=norm_stats,
        config=config.to_dict(),
    )
    dataset.validate()
    return dataset, report
