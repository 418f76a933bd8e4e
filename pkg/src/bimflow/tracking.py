"""Actual-flow recovery: irrelevance filtering and undo/redo resolution.

Raw logs record what the software did, not what the user meant: internal
events, aborted commands, and view manipulation clutter the stream, and an
undo appends entries instead of deleting the undone command. This module
filters the clutter and replays undo/redo markers so that each session ends
up as the sequence of actions that actually contributed to the model.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .types import (
    KNOWN_PREFIXES,
    REDO_PREFIX,
    UNDO_PREFIX,
    LogEntry,
    RawSession,
)

DEFAULT_DROPPED_PREFIXES: frozenset[str] = frozenset(
    {
        "DestroyEvent",
        "Begin Internal Event",
        "Beta ForEach Alert",
        "Beta Undo Alert",
        "Project Sharing Problem",
        "Undo Problem",
        "Undo and Remove Action",
        "Abort Event",
    }
)

DEFAULT_LOW_SIGNIFICANCE: frozenset[str] = frozenset({"zoom", "pan", "scroll", "fit-to-view"})


def _normalize_words(text: str) -> list[str]:
    """Lower-cased word list with punctuation treated as separators."""
    out: list[str] = []
    word: list[str] = []
    for ch in text:
        if ch.isalnum():
            word.append(ch.casefold())
        elif word:
            out.append("".join(word))
            word = []
    if word:
        out.append("".join(word))
    return out


@dataclass
class FilterRules:
    """Configuration for the irrelevance filter."""

    dropped_prefixes: set[str] = field(default_factory=lambda: set(DEFAULT_DROPPED_PREFIXES))
    low_significance_names: set[str] = field(default_factory=lambda: set(DEFAULT_LOW_SIGNIFICANCE))
    min_global_count: int = 0

    def __post_init__(self) -> None:
        unknown = self.dropped_prefixes - set(KNOWN_PREFIXES)
        if unknown:
            raise ValueError(f"unknown prefixes in dropped_prefixes: {sorted(unknown)}")
        self._patterns = [_normalize_words(p) for p in sorted(self.low_significance_names)]

    def is_low_significance(self, name: str) -> bool:
        """True when a configured pattern occurs as a whole-word run in the name.

        Matching is case- and punctuation-insensitive ("fit-to-view" matches
        "Fit To View") but requires word boundaries, so "pan" matches "Pan"
        without matching "Panel".
        """
        words = _normalize_words(name)
        for pattern in self._patterns:
            if not pattern:
                continue
            span = len(pattern)
            for start in range(len(words) - span + 1):
                if words[start : start + span] == pattern:
                    return True
        return False

    @classmethod
    def from_toml(cls, path: str) -> FilterRules:
        import tomli

        with open(path, "rb") as fh:
            data = tomli.load(fh)
        section = data.get("filter", {})
        kwargs: dict[str, Any] = {}
        if "dropped_prefixes" in section:
            kwargs["dropped_prefixes"] = set(section["dropped_prefixes"])
        if "low_significance_names" in section:
            kwargs["low_significance_names"] = set(section["low_significance_names"])
        if "min_global_count" in section:
            kwargs["min_global_count"] = int(section["min_global_count"])
        return cls(**kwargs)


def count_global_occurrences(sessions: Iterable[RawSession]) -> Counter[str]:
    """Corpus-wide message counts, the pre-pass behind the rarity threshold."""
    counts: Counter[str] = Counter()
    for session in sessions:
        counts.update(entry.message for entry in session.entries)
    return counts


def filter_irrelevant(
    session: RawSession,
    rules: FilterRules,
    global_counts: Mapping[str, int] | None = None,
) -> RawSession:
    """Drop entries that do not reflect meaningful user actions.

    Removes configured prefixes (internal/aborted events), low-significance
    names (view manipulation), and — when corpus counts are supplied —
    messages seen fewer than ``min_global_count`` times overall. Undo/redo
    markers pass through; they are consumed by :func:`resolve_undo_redo`.
    """
    kept: list[LogEntry] = []
    for entry in session.entries:
        if entry.prefix in rules.dropped_prefixes:
            continue
        if rules.is_low_significance(entry.message):
            continue
        if (
            rules.min_global_count > 0
            and global_counts is not None
            and entry.prefix not in (UNDO_PREFIX, REDO_PREFIX)
            and global_counts.get(entry.message, 0) < rules.min_global_count
        ):
            continue
        kept.append(entry)
    return RawSession(session.session_id, kept)


@dataclass
class TrackReport:
    """Diagnostics from undo/redo resolution."""

    sessions: int = 0
    entries_in: int = 0
    entries_out: int = 0
    filtered_out: int = 0
    matched_undos: int = 0
    unmatched_undos: int = 0
    matched_redos: int = 0
    unmatched_redos: int = 0

    def merge(self, other: TrackReport) -> None:
        self.sessions += other.sessions
        self.entries_in += other.entries_in
        self.entries_out += other.entries_out
        self.filtered_out += other.filtered_out
        self.matched_undos += other.matched_undos
        self.unmatched_undos += other.unmatched_undos
        self.matched_redos += other.matched_redos
        self.unmatched_redos += other.unmatched_redos

    def to_dict(self) -> dict[str, int]:
        return {
            "sessions": self.sessions,
            "entries_in": self.entries_in,
            "entries_out": self.entries_out,
            "filtered_out": self.filtered_out,
            "matched_undos": self.matched_undos,
            "unmatched_undos": self.unmatched_undos,
            "matched_redos": self.matched_redos,
            "unmatched_redos": self.unmatched_redos,
        }


def _payload_name(entry: LogEntry) -> str | None:
    """The command name an undo/redo marker refers to, if it carries one."""
    name = entry.message.strip()
    if not name or name.casefold() in ("undo", "redo"):
        return None
    return name


class UndoResolutionState:
    """Replay state for undo/redo resolution, usable incrementally.

    Feed entries one at a time (a live session does exactly that); the
    surviving entries can be read off at any point and are identical to a
    one-shot batch resolution of the same prefix of the session.
    """

    def __init__(self, report: TrackReport | None = None):
        self.entries: list[LogEntry] = []
        self.recent_commands: list[tuple[str, int]] = []
        self.recent_undone_commands: list[tuple[str, int]] = []
        self.to_remove_indices: set[int] = set()
        self.report = report if report is not None else TrackReport()

    @staticmethod
    def _search_backward(
        stack: list[tuple[str, int]], name: str | None
    ) -> int | None:
        """Position of the match in ``stack``, scanning most-recent-first.

        With no payload name the most recent element matches (plain LIFO).
        """
        for pos in range(len(stack) - 1, -1, -1):
            if name is None or stack[pos][0] == name:
                return pos
        return None

    def feed(self, entry: LogEntry) -> None:
        idx = len(self.entries)
        self.entries.append(entry)
        if entry.prefix == UNDO_PREFIX:
            # An undo marker never survives; whether its target is found
            # decides if a normal command is removed along with it.
            self.to_remove_indices.add(idx)
            pos = self._search_backward(self.recent_commands, _payload_name(entry))
            if pos is None:
                self.report.unmatched_undos += 1
            else:
                name, target_idx = self.recent_commands.pop(pos)
                self.to_remove_indices.add(target_idx)
                self.recent_undone_commands.append((name, target_idx))
                self.report.matched_undos += 1
        elif entry.prefix == REDO_PREFIX:
            self.to_remove_indices.add(idx)
            pos = self._search_backward(self.recent_undone_commands, _payload_name(entry))
            if pos is None:
                self.report.unmatched_redos += 1
            else:
                name, target_idx = self.recent_undone_commands.pop(pos)
                self.to_remove_indices.discard(target_idx)
                self.recent_commands.append((name, target_idx))
                self.report.matched_redos += 1
        else:
            self.recent_commands.append((entry.message, idx))

    def surviving(self) -> list[LogEntry]:
        return [
            entry
            for idx, entry in enumerate(self.entries)
            if idx not in self.to_remove_indices
        ]


def resolve_undo_redo(session: RawSession, report: TrackReport | None = None) -> RawSession:
    """Replay undo/redo markers and drop them with the commands they revert.

    A matched undo removes itself and its target; a redo restores the most
    recently undone match at its original position and removes itself; an
    unmatched marker removes only itself (counted in the report). Survivor
    order is preserved.
    """
    state = UndoResolutionState(report)
    for entry in session.entries:
        state.feed(entry)
    return RawSession(session.session_id, state.surviving())


def track_actual_flow(
    session: RawSession,
    rules: FilterRules,
    global_counts: Mapping[str, int] | None = None,
    report: TrackReport | None = None,
) -> RawSession:
    """Filter irrelevant entries, then resolve undo/redo logic."""
    if report is not None:
        report.sessions += 1
        report.entries_in += len(session)
    filtered = filter_irrelevant(session, rules, global_counts)
    if report is not None:
        report.filtered_out += len(session) - len(filtered)
    tracked = resolve_undo_redo(filtered, report)
    if report is not None:
        report.entries_out += len(tracked)
    return tracked


def track_corpus(
    sessions: list[RawSession],
    rules: FilterRules,
) -> tuple[list[RawSession], TrackReport]:
    """Track every session, running the global rarity pre-pass first."""
    global_counts = (
        count_global_occurrences(sessions) if rules.min_global_count > 0 else None
    )
    report = TrackReport()
    tracked = [
        track_actual_flow(session, rules, global_counts, report)
        for session in sessions
    ]
    return tracked, report
