"""Association-rule mining of high-level → low-level command redundancy.

A single UI action (a tool or menu command) typically spawns a trail of
low-level event entries. This module counts which low-level commands
reliably follow each high-level command, keeps the statistically
significant pairs (confidence above a threshold), optionally routes them
through a human review step, and then collapses each completed action to
its single high-level entry. High-level entries whose expected low-level
completions are missing are dropped as unfinished.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .types import Level, RawSession

DEFAULT_WINDOW = 10
DEFAULT_CONFIDENCE_THRESHOLD = 0.4
DEFAULT_TOP_N = 10

#: Review decision for a mined pair. ``auto`` means no reviewer was consulted.
STATUS_AUTO = "auto"
STATUS_APPROVED = "approved"
STATUS_REJECTED = "rejected"

#: Callback signature: (high, low, confidence) -> decision string.
ReviewCallback = Callable[[str, str, float], str]


class UndefinedStatisticsError(ValueError):
    """Raised when a support/confidence denominator is zero."""


@dataclass
class AssociationStats:
    """Occurrence and co-occurrence counts over an aligned corpus.

    ``pair_counts[(high, low)]`` counts high-level occurrences followed by
    that low-level name inside the window (each occurrence contributes at
    most 1 per distinct low, so a pair count never exceeds either item
    count). ``item_counts`` counts every entry by name; ``total`` is the
    corpus size |D|.
    """

    pair_counts: dict[tuple[str, str], int] = field(default_factory=dict)
    item_counts: dict[str, int] = field(default_factory=dict)
    total: int = 0
    window: int = DEFAULT_WINDOW


def _window_lows(session: RawSession, start: int, window: int) -> set[str]:
    """Distinct low-level names following position ``start``.

    The window extends at most ``window`` entries and stops at the next
    high-level entry, so consecutive actions never share a window.
    """
    names: set[str] = set()
    for j in range(start + 1, min(start + window, len(session.entries) - 1) + 1):
        entry = session.entries[j]
        if entry.level is Level.HIGH:
            break
        names.add(entry.message)
    return names


def build_stats(sessions: Iterable[RawSession], window: int = DEFAULT_WINDOW) -> AssociationStats:
    stats = AssociationStats(window=window)
    for session in sessions:
        for i, entry in enumerate(session.entries):
            stats.item_counts[entry.message] = stats.item_counts.get(entry.message, 0) + 1
            stats.total += 1
            if entry.level is Level.HIGH:
                for low in _window_lows(session, i, window):
                    key = (entry.message, low)
                    stats.pair_counts[key] = stats.pair_counts.get(key, 0) + 1
    return stats


def compute_support(x: str, stats: AssociationStats) -> float:
    if stats.total == 0:
        raise UndefinedStatisticsError("support is undefined on an empty corpus")
    return stats.item_counts.get(x, 0) / stats.total


def compute_support_pair(x: str, y: str, stats: AssociationStats) -> float:
    if stats.total == 0:
        raise UndefinedStatisticsError("support is undefined on an empty corpus")
    return stats.pair_counts.get((x, y), 0) / stats.total


def compute_confidence(x: str, y: str, stats: AssociationStats) -> float:
    count = stats.item_counts.get(x, 0)
    if count == 0:
        raise UndefinedStatisticsError(f"confidence is undefined: {x!r} has support 0")
    return stats.pair_counts.get((x, y), 0) / count


@dataclass
class MappedLow:
    name: str
    confidence: float
    status: str = STATUS_AUTO


class CommandMapping:
    """Per high-level command, the low-level completions it triggers."""

    def __init__(self) -> None:
        self.entries: dict[str, list[MappedLow]] = {}

    def mapped_lows(self, high: str) -> set[str]:
        """Names of non-rejected mapped lows for a high-level command."""
        return {
            m.name
            for m in self.entries.get(high, [])
            if m.status != STATUS_REJECTED
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for high in sorted(self.entries):
                for m in self.entries[high]:
                    fh.write(
                        json.dumps(
                            {"high": high, "low": m.name,
                             "confidence": m.confidence, "status": m.status},
                            ensure_ascii=False,
                        )
                        + "\n"
                    )

    @classmethod
    def load(cls, path: str) -> CommandMapping:
        out = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                out.entries.setdefault(row["high"], []).append(
                    MappedLow(row["low"], float(row["confidence"]), row["status"])
                )
        return out


def review_from_file(path: str) -> ReviewCallback:
    """Replay persisted human review decisions; unlisted pairs stay auto."""
    decisions: dict[tuple[str, str], str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            decision = row["decision"]
            if decision not in (STATUS_APPROVED, STATUS_REJECTED):
                raise ValueError(f"unknown review decision {decision!r}")
            decisions[(row["high"], row["low"])] = decision

    def review(high: str, low: str, confidence: float) -> str:
        return decisions.get((high, low), STATUS_AUTO)

    return review


def mine_mapping(
    sessions: list[RawSession],
    threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
    top_n: int = DEFAULT_TOP_N,
    review: ReviewCallback | None = None,
    window: int = DEFAULT_WINDOW,
    stats: AssociationStats | None = None,
) -> CommandMapping:
    """Mine the high→low trigger mapping from an aligned corpus.

    Pairs with confidence strictly above ``threshold`` are kept, capped at
    the ``top_n`` most confident per high-level command (ties broken by
    name), then passed to the review callback; rejected pairs stay in the
    persisted mapping for audit but are ignored by :func:`apply_mapping`.
    """
    if stats is None:
        stats = build_stats(sessions, window)
    highs = sorted({h for (h, _l) in stats.pair_counts})
    mapping = CommandMapping()
    for high in highs:
        candidates = []
        for (h, low), _count in stats.pair_counts.items():
            if h != high:
                continue
            confidence = compute_confidence(high, low, stats)
            if confidence > threshold:
                candidates.append((low, confidence))
        if not candidates:
            continue
        candidates.sort(key=lambda t: (-t[1], t[0]))
        retained = candidates[:top_n]
        mapping.entries[high] = [
            MappedLow(low, conf, review(high, low, conf) if review else STATUS_AUTO)
            for low, conf in retained
        ]
    return mapping


def apply_mapping(
    sessions: list[RawSession],
    mapping: CommandMapping,
    window: int = DEFAULT_WINDOW,
) -> list[RawSession]:
    """Collapse each completed action to its high-level entry.

    Three rules per session: (a) low-level entries inside the window after
    a high-level entry and in its mapped set are removed; (b) a high-level
    entry with a non-empty mapped set but no mapped low in its window is
    removed as unfinished; (c) everything else survives. A high-level
    command with no mined lows is assumed self-contained.
    """
    out: list[RawSession] = []
    for session in sessions:
        remove: set[int] = set()
        for i, entry in enumerate(session.entries):
            if entry.level is not Level.HIGH:
                continue
            mapped = mapping.mapped_lows(entry.message)
            if not mapped:
                continue
            completed = False
            for j in range(i + 1, min(i + window, len(session.entries) - 1) + 1):
                follower = session.entries[j]
                if follower.level is Level.HIGH:
                    break
                if follower.message in mapped:
                    completed = True
                    remove.add(j)
            if not completed:
                remove.add(i)
        kept = [e for idx, e in enumerate(session.entries) if idx not in remove]
        out.append(RawSession(session.session_id, kept))
    return out
