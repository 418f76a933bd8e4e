"""Documentation-grounded command augmentation.

Command names alone carry little meaning, but the authoring tool's online
documentation describes every command in detail. This module chunks a
markdown corpus, embeds the chunks, retrieves the most relevant ones per
command, and asks a text-generation provider to produce a description plus
type/target labels. Workflows are augmented from their constituents'
metadata rather than from retrieval.
"""

from __future__ import annotations

import glob
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .providers import Embedder, ProviderError, TextGenerator
from .types import CommandMeta

DEFAULT_MAX_CHUNK_TOKENS = 400
DEFAULT_TOP_K = 2

#: Joined constituent names form a workflow's display name.
WORKFLOW_JOINER = "; "


@dataclass
class DocChunk:
    """One retrievable fragment of documentation."""

    doc_id: str
    text: str
    embedding: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("documentation chunks must not be empty")


@dataclass
class IngestReport:
    files: int = 0
    chunks: int = 0
    total_tokens: int = 0
    max_chunk_tokens: int = 0

    def to_dict(self) -> dict[str, int]:
        return {
            "files": self.files,
            "chunks": self.chunks,
            "total_tokens": self.total_tokens,
            "max_chunk_tokens": self.max_chunk_tokens,
        }


def _token_count(text: str) -> int:
    # Whitespace tokens; a budget heuristic, not a model tokenizer.
    return len(text.split())


def _split_sections(text: str) -> list[str]:
    """Split markdown at headings, keeping each heading with its body."""
    sections: list[list[str]] = []
    current: list[str] = []
    for line in text.splitlines():
        if line.lstrip().startswith("#") and current:
            sections.append(current)
            current = []
        current.append(line)
    if current:
        sections.append(current)
    return ["\n".join(lines).strip() for lines in sections if "\n".join(lines).strip()]


def _split_to_budget(section: str, budget: int) -> list[str]:
    """Break an oversized section at paragraph boundaries, in order."""
    if _token_count(section) <= budget:
        return [section]
    paragraphs = [p for p in section.split("\n\n") if p.strip()]
    pieces: list[str] = []
    current: list[str] = []
    used = 0
    for para in paragraphs:
        n = _token_count(para)
        if current and used + n > budget:
            pieces.append("\n\n".join(current))
            current, used = [], 0
        if n > budget:
            # A single paragraph over budget is hard-split by words.
            words = para.split()
            if current:
                pieces.append("\n\n".join(current))
                current, used = [], 0
            for start in range(0, len(words), budget):
                pieces.append(" ".join(words[start : start + budget]))
            continue
        current.append(para)
        used += n
    if current:
        pieces.append("\n\n".join(current))
    return pieces


def chunk_markdown(text: str, doc_name: str, max_tokens: int = DEFAULT_MAX_CHUNK_TOKENS) -> list[DocChunk]:
    chunks: list[DocChunk] = []
    for section in _split_sections(text):
        for piece in _split_to_budget(section, max_tokens):
            chunks.append(DocChunk(doc_id=f"{doc_name}#{len(chunks)}", text=piece))
    return chunks


def ingest_documentation(
    corpus_dir: str,
    embedder: Embedder,
    max_tokens: int = DEFAULT_MAX_CHUNK_TOKENS,
    report: IngestReport | None = None,
) -> list[DocChunk]:
    """Chunk and embed every markdown file under ``corpus_dir``."""
    paths = sorted(glob.glob(os.path.join(corpus_dir, "**", "*.md"), recursive=True))
    if not paths:
        raise FileNotFoundError(f"no markdown documentation found under {corpus_dir!r}")
    chunks: list[DocChunk] = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        stem = os.path.splitext(os.path.relpath(path, corpus_dir))[0]
        file_chunks = chunk_markdown(text, stem, max_tokens)
        for chunk in file_chunks:
            chunk.embedding = embedder.embed(chunk.text)
        chunks.extend(file_chunks)
        if report is not None:
            report.files += 1
    if report is not None:
        report.chunks = len(chunks)
        tokens = [_token_count(c.text) for c in chunks]
        report.total_tokens = sum(tokens)
        report.max_chunk_tokens = max(tokens)
    return chunks


def retrieve_context(
    name: str,
    chunks: list[DocChunk],
    embedder: Embedder,
    k: int = DEFAULT_TOP_K,
) -> list[DocChunk]:
    """The k chunks most cosine-similar to the command name.

    Similarities are rounded before ranking so exact ties fall back to
    chunk order (file name, then position).
    """
    if k <= 0 or not chunks:
        return []
    query = embedder.embed(name)
    scored = []
    for pos, chunk in enumerate(chunks):
        sim = float(np.dot(query, chunk.embedding))
        scored.append((round(-sim, 12), pos))
    scored.sort()
    return [chunks[pos] for _neg, pos in scored[:k]]


@dataclass
class LabelRegistry:
    """Closed, ordered label set; unseen labels are appended on first use."""

    labels: list[str] = field(default_factory=list)
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._index = {label: i for i, label in enumerate(self.labels)}

    def __len__(self) -> int:
        return len(self.labels)

    def intern(self, label: str) -> int:
        if label not in self._index:
            self._index[label] = len(self.labels)
            self.labels.append(label)
        return self._index[label]

    def id_of(self, label: str) -> int:
        return self._index[label]


def augment_command(
    name: str,
    context_chunks: list[DocChunk],
    generator: TextGenerator,
    types: LabelRegistry,
    targets: LabelRegistry,
    embedder: Embedder | None = None,
) -> CommandMeta:
    """Produce metadata for one command from its retrieved context.

    Provider failures yield a flagged placeholder instead of aborting the
    whole augmentation run.
    """
    context = "\n\n".join(chunk.text for chunk in context_chunks)
    try:
        response = generator.describe(name, context)
    except ProviderError:
        types.intern("Unknown")
        targets.intern("Unknown")
        return CommandMeta(name=name, description="", type_label="Unknown",
                           target_label="Unknown", flagged=True)
    types.intern(response["type"])
    targets.intern(response["target"])
    embedding = None
    if embedder is not None and response["description"]:
        embedding = embedder.embed(response["description"])
    return CommandMeta(
        name=name,
        description=response["description"],
        type_label=response["type"],
        target_label=response["target"],
        description_embedding=embedding,
    )


def augment_workflow(
    name: str,
    constituents: list[str],
    meta: dict[str, CommandMeta],
    generator: TextGenerator,
    types: LabelRegistry,
    targets: LabelRegistry,
    embedder: Embedder | None = None,
) -> CommandMeta:
    """Metadata for a workflow, summarized from its constituents' metas."""
    parts = []
    for constituent in constituents:
        m = meta.get(constituent)
        parts.append(m.description if m and m.description else constituent)
    context = "\n\n".join(parts)
    try:
        response = generator.describe(name, context, is_workflow=True,
                                      constituents=constituents)
    except ProviderError:
        types.intern("Workflow")
        targets.intern("Unknown")
        return CommandMeta(name=name, description="", type_label="Workflow",
                           target_label="Unknown", is_workflow=True,
                           constituents=list(constituents), flagged=True)
    types.intern(response["type"])
    targets.intern(response["target"])
    embedding = None
    if embedder is not None and response["description"]:
        embedding = embedder.embed(response["description"])
    return CommandMeta(
        name=name,
        description=response["description"],
        type_label=response["type"],
        target_label=response["target"],
        description_embedding=embedding,
        is_workflow=True,
        constituents=list(constituents),
    )


def augment_vocabulary(
    command_names: list[str],
    workflows: dict[str, list[str]],
    chunks: list[DocChunk],
    generator: TextGenerator,
    embedder: Embedder,
    types: LabelRegistry | None = None,
    targets: LabelRegistry | None = None,
    retrieval_k: int = DEFAULT_TOP_K,
) -> tuple[dict[str, CommandMeta], LabelRegistry, LabelRegistry]:
    """Augment plain commands first, then workflows built on their metas."""
    types = types if types is not None else LabelRegistry()
    targets = targets if targets is not None else LabelRegistry()
    meta: dict[str, CommandMeta] = {}
    for name in command_names:
        context = retrieve_context(name, chunks, embedder, retrieval_k)
        meta[name] = augment_command(name, context, generator, types, targets, embedder)
    for name, constituents in workflows.items():
        meta[name] = augment_workflow(name, constituents, meta, generator,
                                      types, targets, embedder)
    return meta, types, targets


def save_meta_registry(meta: dict[str, CommandMeta], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name in sorted(meta):
            m = meta[name]
            fh.write(
                json.dumps(
                    {
                        "name": m.name,
                        "description": m.description,
                        "type": m.type_label,
                        "target": m.target_label,
                        "is_workflow": m.is_workflow,
                        "constituents": list(m.constituents),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_meta_registry(path: str) -> dict[str, CommandMeta]:
    meta: dict[str, CommandMeta] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            m = CommandMeta.from_dict(json.loads(line))
            meta[m.name] = m
    return meta
