"""Shared data model for the whole pipeline.

Everything downstream (tracking, alignment, mining, augmentation, training,
serving) speaks in terms of these types. They are plain dataclasses with
stable ``to_dict``/``from_dict`` JSON forms so that every pipeline stage can
be persisted and diffed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Iterable

import numpy as np


class Category(str, Enum):
    """Pre-defined top-level category of a log entry."""

    TOOL = "Tool"
    MENU = "Menu"
    UNDO = "UNDO"


#: The closed set of message prefixes a log entry may carry. Anything else is
#: rejected at parse time so later stages can treat the prefix as total.
KNOWN_PREFIXES: tuple[str, ...] = (
    "Tool",
    "Menu",
    "Event",
    "End Event",
    "DestroyEvent",
    "Redo Event",
    "Undo Event",
    "Abort Event",
    "Begin Internal Event",
    "Beta ForEach Alert",
    "Beta Undo Alert",
    "Project Sharing Problem",
    "Undo Problem",
    "Undo and Remove Action",
)

#: Prefixes that record a user-visible UI action; everything else is an
#: internal event record.
HIGH_LEVEL_PREFIXES: frozenset[str] = frozenset({"Tool", "Menu"})

UNDO_PREFIX = "Undo Event"
REDO_PREFIX = "Redo Event"


def category_for_prefix(prefix: str) -> Category:
    """Top-level category implied by a prefix."""
    if prefix == "Tool":
        return Category.TOOL
    if prefix == "Menu":
        return Category.MENU
    return Category.UNDO


class Level(str, Enum):
    """Whether a command is a UI-visible action or an internal event."""

    HIGH = "High"
    LOW = "Low"


def level_for_prefix(prefix: str) -> Level:
    return Level.HIGH if prefix in HIGH_LEVEL_PREFIXES else Level.LOW


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 instant into an aware UTC datetime.

    Accepts a trailing ``Z`` as well as explicit offsets; naive stamps are
    taken to be UTC.
    """
    text = value.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    """Render an aware datetime as ISO-8601 UTC with millisecond precision."""
    ts = ts.astimezone(timezone.utc)
    return ts.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts.microsecond // 1000:03d}Z"


@dataclass
class LogEntry:
    """One timestamped record from a raw command log."""

    session_id: str
    timestamp: datetime
    category: Category
    prefix: str
    message: str
    command_id: int
    language: str = "und"

    @property
    def level(self) -> Level:
        return level_for_prefix(self.prefix)

    def to_dict(self) -> dict[str, Any]:
        return {
            "session": self.session_id,
            "ts": format_timestamp(self.timestamp),
            "category": self.category.value,
            "prefix": self.prefix,
            "message": self.message,
            "command_id": self.command_id,
            "lang": self.language,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> LogEntry:
        prefix = str(data["prefix"])
        if prefix not in KNOWN_PREFIXES:
            raise ValueError(f"unknown prefix: {prefix!r}")
        message = str(data["message"]).strip()
        if not message:
            raise ValueError("empty message")
        return cls(
            session_id=str(data["session"]),
            timestamp=parse_timestamp(str(data["ts"])),
            category=Category(str(data["category"])),
            prefix=prefix,
            message=message,
            command_id=int(data["command_id"]),
            language=str(data.get("lang", "und")),
        )


@dataclass
class RawSession:
    """A chronological per-session stream of log entries."""

    session_id: str
    entries: list[LogEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def sorted(self) -> RawSession:
        """Entries re-sorted by timestamp, stable on ties (file order)."""
        ordered = sorted(self.entries, key=lambda e: e.timestamp)
        return RawSession(self.session_id, ordered)

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "entries": [e.to_dict() for e in self.entries],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RawSession:
        return cls(
            session_id=str(data["session_id"]),
            entries=[LogEntry.from_dict(e) for e in data["entries"]],
        )


@dataclass
class CanonicalCommand:
    """A command under its unique canonical English identity."""

    name: str
    source_ids: set[int] = field(default_factory=set)
    level: Level = Level.HIGH

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "source_ids": sorted(self.source_ids),
            "level": self.level.value,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CanonicalCommand:
        return cls(
            name=str(data["name"]),
            source_ids=set(int(i) for i in data.get("source_ids", [])),
            level=Level(data.get("level", "High")),
        )


@dataclass
class CommandMeta:
    """Documentation-derived meta-information for one command or workflow."""

    name: str
    description: str = ""
    type_label: str = "Unknown"
    target_label: str = "Unknown"
    description_embedding: np.ndarray | None = None
    is_workflow: bool = False
    constituents: list[str] = field(default_factory=list)
    flagged: bool = False

    def __post_init__(self) -> None:
        if self.is_workflow and len(self.constituents) < 2:
            raise ValueError("a workflow needs at least two constituents")
        if not self.is_workflow and self.constituents:
            raise ValueError("non-workflow meta must not list constituents")

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "type": self.type_label,
            "target": self.target_label,
            "is_workflow": self.is_workflow,
            "constituents": list(self.constituents),
            "flagged": self.flagged,
            "description_embedding": (
                None
                if self.description_embedding is None
                else [float(x) for x in self.description_embedding]
            ),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CommandMeta:
        emb = data.get("description_embedding")
        return cls(
            name=str(data["name"]),
            description=str(data.get("description", "")),
            type_label=str(data.get("type", "Unknown")),
            target_label=str(data.get("target", "Unknown")),
            description_embedding=None if emb is None else np.asarray(emb, dtype=np.float32),
            is_workflow=bool(data.get("is_workflow", False)),
            constituents=[str(c) for c in data.get("constituents", [])],
            flagged=bool(data.get("flagged", False)),
        )


class Vocabulary:
    """Ordered, closed set of recommendable items with a dense-id bijection.

    Dense ids are contiguous from 0 in item order. The neural model reserves
    a separate padding token, so these ids are shifted by one at the model
    boundary; the vocabulary itself knows nothing about padding.
    """

    def __init__(self, items: Iterable[CanonicalCommand]):
        self.items: list[CanonicalCommand] = list(items)
        self.index: dict[str, int] = {}
        for i, item in enumerate(self.items):
            if item.name in self.index:
                raise ValueError(f"duplicate vocabulary name: {item.name!r}")
            self.index[item.name] = i

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, name: str) -> bool:
        return name in self.index

    def id_of(self, name: str) -> int:
        return self.index[name]

    def name_of(self, dense_id: int) -> str:
        return self.items[dense_id].name

    def names(self) -> list[str]:
        return [item.name for item in self.items]

    def content_hash(self) -> str:
        """Hash of the ordered names; detects vocabulary skew across artifacts."""
        blob = json.dumps(self.names(), ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def to_dict(self) -> dict[str, Any]:
        return {"items": [item.to_dict() for item in self.items]}

    @classmethod
    def from_names(cls, names: Iterable[str]) -> Vocabulary:
        return cls(CanonicalCommand(name=n) for n in names)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Vocabulary:
        return cls(CanonicalCommand.from_dict(d) for d in data["items"])


@dataclass
class InteractionSequence:
    """A finalized, feature-enriched command sequence.

    ``ids`` are dense vocabulary ids; ``dt`` is seconds since the previous
    step (0 for the first); ``occ`` is the consecutive-occurrence run length
    that was collapsed into each step.
    """

    session_id: str
    ids: list[int]
    dt: list[float]
    occ: list[int]
    split: str = "train"

    def __post_init__(self) -> None:
        if not (len(self.ids) == len(self.dt) == len(self.occ)):
            raise ValueError("per-step feature arrays must share the sequence length")
        if self.split not in ("train", "validation"):
            raise ValueError(f"unknown split tag: {self.split!r}")
        # Features are persisted as f32; coercing here makes serialization a
        # bijection on the in-memory model.
        self.dt = [float(np.float32(v)) for v in self.dt]
        self.occ = [int(v) for v in self.occ]
        if any(v < 0 for v in self.dt):
            raise ValueError("time intervals must be non-negative")
        if any(v < 1 for v in self.occ):
            raise ValueError("occurrence counts must be at least 1")

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class Dataset:
    """A vocabulary plus the split sequences that reference it."""

    vocabulary: Vocabulary
    sequences: list[InteractionSequence]
    meta: dict[str, CommandMeta] = field(default_factory=dict)
    type_labels: list[str] = field(default_factory=list)
    target_labels: list[str] = field(default_factory=list)
    norm_stats: dict[str, float] = field(default_factory=dict)
    config: dict[str, Any] = field(default_factory=dict)

    def split_sequences(self, split: str) -> list[InteractionSequence]:
        return [s for s in self.sequences if s.split == split]

    def validate(self) -> None:
        """Check the cross-reference invariants; raises on violation."""
        n = len(self.vocabulary)
        for seq in self.sequences:
            for cid in seq.ids:
                if not 0 <= cid < n:
                    raise ValueError(
                        f"sequence {seq.session_id!r} references id {cid} "
                        f"outside vocabulary of size {n}"
                    )
