"""Streaming session state for online inference.

A :class:`LiveSession` buffers raw events and, after every append, re-runs
the exact batch preprocessing (filter → undo/redo resolution → alignment →
dedup → workflow encoding → features) over the buffer. Recomputing from
the pure pipeline functions makes online state equal offline output by
construction; deltas are derived by diffing consecutive processed
sequences. The processed view is capped at a maximum length with FIFO
eviction so model input never exceeds the trained context size.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from difflib import SequenceMatcher

from .alignment import AlignmentDictionary, apply_alignment
from .features import FeatureStep, compute_features, intervals
from .mining import CommandMapping, apply_mapping
from .providers import Translator
from .tracking import FilterRules, filter_irrelevant, resolve_undo_redo
from .types import LogEntry, RawSession
from .workflows import BpeModel, encode_with_workflows

MAX_PROCESSED_STEPS = 110


@dataclass(frozen=True)
class ProcessedStep:
    """One step of the canonical, deduplicated, feature-enriched timeline."""

    name: str
    dt: float
    occ: int
    vocabulary_id: int | None
    is_workflow: bool
    constituents: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dt": self.dt,
            "occ": self.occ,
            "vocabulary_id": self.vocabulary_id,
            "is_workflow": self.is_workflow,
            "constituents": list(self.constituents),
        }


@dataclass
class StepDelta:
    added: list[tuple[int, ProcessedStep]] = field(default_factory=list)
    removed: list[tuple[int, ProcessedStep]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "added": [{"index": i, **s.to_dict()} for i, s in self.added],
            "removed": [{"index": i, **s.to_dict()} for i, s in self.removed],
        }


class StreamPipeline:
    """The shared, immutable-per-deployment preprocessing assets.

    The alignment dictionary is the one mutable piece (unseen names join
    it with provenance "late"); a lock serializes those insertions.
    """

    def __init__(
        self,
        rules: FilterRules,
        dictionary: AlignmentDictionary,
        mapping: CommandMapping,
        bpe: BpeModel,
        name_to_id: dict[str, int],
        translator: Translator | None = None,
        max_steps: int = MAX_PROCESSED_STEPS,
    ):
        self.rules = rules
        self.dictionary = dictionary
        self.mapping = mapping
        self.bpe = bpe
        self.name_to_id = name_to_id
        self.translator = translator
        self.max_steps = max_steps
        self.workflow_constituents = bpe.workflows()
        self._dictionary_lock = threading.Lock()

    def process(self, session_id: str, entries: list[LogEntry]) -> list[ProcessedStep]:
        if not entries:
            return []
        session = RawSession(session_id, list(entries))
        filtered = filter_irrelevant(session, self.rules)
        tracked = resolve_undo_redo(filtered)
        with self._dictionary_lock:
            aligned = apply_alignment([tracked], self.dictionary, self.translator)[0]
        deduped = apply_mapping([aligned], self.mapping)[0]
        encoded = encode_with_workflows(deduped, self.bpe)
        steps = compute_features(encoded)
        dts = intervals(steps)
        out = []
        for step, dt in zip(steps, dts):
            constituents = self.workflow_constituents.get(step.name)
            out.append(
                ProcessedStep(
                    name=step.name,
                    dt=float(dt),
                    occ=int(step.occurrences),
                    vocabulary_id=self.name_to_id.get(step.name),
                    is_workflow=constituents is not None,
                    constituents=tuple(constituents or ()),
                )
            )
        if len(out) > self.max_steps:
            out = out[-self.max_steps :]
        return out


class LiveSession:
    """Per-session event buffer plus its processed projection."""

    def __init__(self, session_id: str, pipeline: StreamPipeline):
        self.session_id = session_id
        self.pipeline = pipeline
        self.events: list[LogEntry] = []
        self.processed: list[ProcessedStep] = []
        self.last_activity = time.monotonic()
        self._lock = threading.Lock()

    def touch(self) -> None:
        self.last_activity = time.monotonic()

    def append(self, entry: LogEntry) -> StepDelta:
        """Add one event and report how the processed timeline changed."""
        with self._lock:
            self.events.append(entry)
            new = self.pipeline.process(self.session_id, self.events)
            delta = diff_steps(self.processed, new)
            self.processed = new
            self.touch()
            return delta

    def snapshot(self) -> list[ProcessedStep]:
        with self._lock:
            return list(self.processed)


def diff_steps(old: list[ProcessedStep], new: list[ProcessedStep]) -> StepDelta:
    """Minimal add/remove edit script between two processed timelines.

    Steps are matched whole, not by name: a fold that only bumps a step's
    occurrence count, or an undo that shifts a survivor's interval, must
    stream as a replacement or clients mirroring the deltas drift from
    the processed state.
    """
    matcher = SequenceMatcher(a=old, b=new, autojunk=False)
    delta = StepDelta()
    for op, a0, a1, b0, b1 in matcher.get_opcodes():
        if op in ("delete", "replace"):
            delta.removed.extend((i, old[i]) for i in range(a0, a1))
        if op in ("insert", "replace"):
            delta.added.extend((i, new[i]) for i in range(b0, b1))
    return delta


class SessionStore:
    """Thread-safe registry of live sessions with idle expiry."""

    def __init__(self, pipeline: StreamPipeline):
        self.pipeline = pipeline
        self._sessions: dict[str, LiveSession] = {}
        self._lock = threading.Lock()
        self._counter = 0

    def create(self) -> LiveSession:
        with self._lock:
            self._counter += 1
            session_id = f"live-{self._counter:06d}"
            session = LiveSession(session_id, self.pipeline)
            self._sessions[session_id] = session
            return session

    def get(self, session_id: str) -> LiveSession | None:
        with self._lock:
            return self._sessions.get(session_id)

    def expire(self, ttl_seconds: float) -> int:
        """Drop sessions idle for at least ``ttl_seconds``; return the count."""
        now = time.monotonic()
        with self._lock:
            stale = [
                sid
                for sid, s in self._sessions.items()
                if now - s.last_activity >= ttl_seconds
            ]
            for sid in stale:
                del self._sessions[sid]
            return len(stale)

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)
