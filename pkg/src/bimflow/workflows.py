"""Workflow discovery via byte-pair-encoding over command sequences.

Treating each session as a sentence of command "words", the most frequent
adjacent command pair is merged into a single workflow token, repeatedly.
Merged tokens participate in later merges, so workflows longer than two
commands emerge naturally. Encoding applies the learned merges to a
session; decoding expands workflow tokens back to their constituents.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .docs import WORKFLOW_JOINER
from .types import LogEntry, RawSession


@dataclass
class BpeModel:
    """An ordered list of merges plus the vocabulary they produce."""

    merges: list[tuple[str, str]] = field(default_factory=list)
    initial_vocabulary: list[str] = field(default_factory=list)

    def token_name(self, left: str, right: str) -> str:
        return f"{left}{WORKFLOW_JOINER}{right}"

    def merged_tokens(self) -> list[str]:
        return [self.token_name(l, r) for l, r in self.merges]

    def constituents(self, token: str) -> list[str]:
        """Fully expanded command list for a token (itself if unmerged)."""
        expansion = {name: [name] for name in self.initial_vocabulary}
        for left, right in self.merges:
            merged = self.token_name(left, right)
            expansion[merged] = expansion.get(left, [left]) + expansion.get(right, [right])
        return expansion.get(token, [token])

    def workflows(self) -> dict[str, list[str]]:
        """Merged token → ordered constituent command names."""
        return {token: self.constituents(token) for token in self.merged_tokens()}

    def vocabulary(self) -> list[str]:
        return list(self.initial_vocabulary) + self.merged_tokens()

    def to_dict(self) -> dict:
        return {
            "merges": [list(m) for m in self.merges],
            "initial_vocabulary": list(self.initial_vocabulary),
        }

    @classmethod
    def from_dict(cls, data: dict) -> BpeModel:
        return cls(
            merges=[(l, r) for l, r in data["merges"]],
            initial_vocabulary=[str(t) for t in data["initial_vocabulary"]],
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False, indent=2)

    @classmethod
    def load(cls, path: str) -> BpeModel:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _count_adjacent_pairs(corpora: list[list[str]]) -> Counter[tuple[str, str]]:
    counts: Counter[tuple[str, str]] = Counter()
    for tokens in corpora:
        for i in range(len(tokens) - 1):
            counts[(tokens[i], tokens[i + 1])] += 1
    return counts


def _merge_pass(tokens: list[str], pair: tuple[str, str], merged: str) -> list[str]:
    """Replace non-overlapping occurrences of ``pair``, left to right."""
    out: list[str] = []
    i = 0
    while i < len(tokens):
        if i + 1 < len(tokens) and (tokens[i], tokens[i + 1]) == pair:
            out.append(merged)
            i += 2
        else:
            out.append(tokens[i])
            i += 1
    return out


def learn_workflows(
    sessions: Iterable[RawSession],
    num_merges: int = 10,
) -> tuple[BpeModel, int]:
    """Learn up to ``num_merges`` workflow merges from unified sessions.

    Pairs never span session boundaries. The most frequent adjacent pair
    wins each round; exact count ties resolve lexicographically by
    (left, right). Returns the model and the number of merges actually
    performed (fewer than requested when the corpus runs out of pairs).
    """
    corpora = [[entry.message for entry in session.entries] for session in sessions]
    initial = sorted({token for tokens in corpora for token in tokens})
    model = BpeModel(initial_vocabulary=initial)
    performed = 0
    for _ in range(num_merges):
        counts = _count_adjacent_pairs(corpora)
        if not counts:
            break
        best_pair = min(counts, key=lambda p: (-counts[p], p))
        merged = model.token_name(*best_pair)
        corpora = [_merge_pass(tokens, best_pair, merged) for tokens in corpora]
        model.merges.append(best_pair)
        performed += 1
    return model, performed


def encode_tokens(tokens: list[str], model: BpeModel) -> list[str]:
    """Apply the learned merges, in order, to a token list."""
    for left, right in model.merges:
        tokens = _merge_pass(tokens, (left, right), model.token_name(left, right))
    return tokens


def decode_tokens(tokens: list[str], model: BpeModel) -> list[str]:
    """Expand every workflow token back to its constituent commands."""
    out: list[str] = []
    for token in tokens:
        out.extend(model.constituents(token))
    return out


def encode_with_workflows(session: RawSession, model: BpeModel) -> RawSession:
    """Rewrite a session over the merged vocabulary.

    A workflow entry adopts the timestamp of its last constituent (the
    moment the workflow completed) and that constituent's category/prefix
    metadata; decode of the messages recovers the original message list
    exactly.
    """
    entries = session.entries
    tokens = [entry.message for entry in entries]
    merged_tokens = encode_tokens(tokens, model)
    out: list[LogEntry] = []
    consumed = 0
    for token in merged_tokens:
        width = len(model.constituents(token))
        last = entries[consumed + width - 1]
        out.append(
            LogEntry(
                session_id=last.session_id,
                timestamp=last.timestamp,
                category=last.category,
                prefix=last.prefix,
                message=token,
                command_id=last.command_id,
                language=last.language,
            )
        )
        consumed += width
    return RawSession(session.session_id, out)
