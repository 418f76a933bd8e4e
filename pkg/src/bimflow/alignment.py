"""Multi-language command-name alignment.

Log messages arrive in whatever UI language the user ran, and numeric
command ids are not unique identities (distinct commands share ids). This
module translates every distinct (name, id) pair to English, embeds the
translations, and groups them: a coherent id group adopts one canonical
name chosen by its medoid; an incoherent group is density-clustered into
sub-groups first. The result is a total dictionary from raw pairs to
canonical English names.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from sklearn.cluster import DBSCAN
from sklearn.metrics import silhouette_score

from .providers import Embedder, ProviderError, Translator
from .types import LogEntry, RawSession

DIRECT = "direct-centroid"
SUB_CLUSTER = "sub-cluster"
NOISE_SINGLETON = "noise-singleton"
LATE = "late"


@dataclass
class AlignmentConfig:
    """Knobs for the alignment pass."""

    similarity_threshold: float = 0.82
    epsilon_search_range: tuple[float, float] = (0.05, 0.95)
    min_points: int = 2

    def __post_init__(self) -> None:
        if not 0.0 < self.similarity_threshold < 1.0:
            raise ValueError("similarity threshold must lie in (0, 1)")
        lo, hi = self.epsilon_search_range
        if not lo < hi:
            raise ValueError("epsilon search range must satisfy lo < hi")


@dataclass
class AlignmentReport:
    """Diagnostics from a dictionary build."""

    groups: int = 0
    coherent_groups: int = 0
    clustered_groups: int = 0
    tiny_incoherent_groups: int = 0
    degenerate_epsilon_groups: int = 0
    noise_pairs: int = 0
    untranslated: int = 0
    failed_groups: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "groups": self.groups,
            "coherent_groups": self.coherent_groups,
            "clustered_groups": self.clustered_groups,
            "tiny_incoherent_groups": self.tiny_incoherent_groups,
            "degenerate_epsilon_groups": self.degenerate_epsilon_groups,
            "noise_pairs": self.noise_pairs,
            "untranslated": self.untranslated,
            "failed_groups": self.failed_groups,
        }


class AlignmentDictionary:
    """Total map from (raw name, command id) to a canonical English name."""

    def __init__(self) -> None:
        self.entries: dict[tuple[str, int], tuple[str, str]] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: tuple[str, int]) -> bool:
        return key in self.entries

    def canonical(self, name: str, command_id: int) -> str:
        return self.entries[(name, command_id)][0]

    def add(self, name: str, command_id: int, canonical: str, provenance: str) -> None:
        if not canonical:
            raise ValueError("canonical names must be non-empty")
        self.entries[(name, command_id)] = (canonical, provenance)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for (name, cid) in sorted(self.entries):
                canonical, provenance = self.entries[(name, cid)]
                fh.write(
                    json.dumps(
                        {"name": name, "id": cid, "canonical": canonical,
                         "provenance": provenance},
                        ensure_ascii=False,
                    )
                    + "\n"
                )

    @classmethod
    def load(cls, path: str) -> AlignmentDictionary:
        out = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                out.add(row["name"], int(row["id"]), row["canonical"], row["provenance"])
        return out


def pairwise_mean_cosine(vectors: np.ndarray) -> float:
    """Mean cosine similarity over all unordered pairs; 1.0 below two vectors."""
    vectors = np.asarray(vectors, dtype=np.float64)
    n = vectors.shape[0]
    if n < 2:
        return 1.0
    normed = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    gram = normed @ normed.T
    total = (gram.sum() - np.trace(gram)) / 2.0
    return float(total / (n * (n - 1) / 2))


def dbscan(vectors: np.ndarray, epsilon: float, min_points: int) -> np.ndarray:
    """Density clustering under cosine distance; noise is labeled −1."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    model = DBSCAN(eps=epsilon, min_samples=min_points, metric="cosine")
    return model.fit_predict(np.asarray(vectors, dtype=np.float64))


def _silhouette_at(vectors: np.ndarray, epsilon: float, min_points: int) -> float:
    """Mean silhouette of the non-noise part; −inf when undefined."""
    labels = dbscan(vectors, epsilon, min_points)
    mask = labels >= 0
    kept = labels[mask]
    if len(set(kept)) < 2 or mask.sum() < 3:
        return float("-inf")
    try:
        return float(silhouette_score(vectors[mask], kept, metric="cosine"))
    except ValueError:
        return float("-inf")


@dataclass
class EpsilonChoice:
    epsilon: float
    score: float
    degenerate: bool


def select_epsilon(
    vectors: np.ndarray,
    config: AlignmentConfig,
    grid_size: int = 17,
    refine_iters: int = 24,
) -> EpsilonChoice:
    """Pick the ε maximizing mean silhouette over the configured range.

    A coarse grid locates the best region, then golden-section search
    refines inside the bracketing interval. The objective is piecewise
    constant in ε, so refinement settles on a point inside the best
    plateau; with a fixed grid this is fully deterministic. When no ε in
    range yields two clusters, the range midpoint is returned with the
    degenerate flag set.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.shape[0] < 3:
        raise ValueError("epsilon selection needs at least 3 vectors")
    lo, hi = config.epsilon_search_range
    grid = np.linspace(lo, hi, grid_size)
    scores = [_silhouette_at(vectors, float(e), config.min_points) for e in grid]
    best = int(np.argmax(scores))
    if not np.isfinite(scores[best]):
        return EpsilonChoice(epsilon=(lo + hi) / 2.0, score=float("nan"), degenerate=True)

    a = float(grid[max(best - 1, 0)])
    b = float(grid[min(best + 1, grid_size - 1)])
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - (b - a) * inv_phi
    d = a + (b - a) * inv_phi
    fc = _silhouette_at(vectors, c, config.min_points)
    fd = _silhouette_at(vectors, d, config.min_points)
    for _ in range(refine_iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - (b - a) * inv_phi
            fc = _silhouette_at(vectors, c, config.min_points)
        else:
            a, c, fc = c, d, fd
            d = a + (b - a) * inv_phi
            fd = _silhouette_at(vectors, d, config.min_points)
    candidates = [(fc, c), (fd, d), (scores[best], float(grid[best]))]
    score, eps = max(candidates, key=lambda t: t[0])
    return EpsilonChoice(epsilon=float(eps), score=float(score), degenerate=False)


@dataclass
class _Pair:
    """One deduped (raw name, id) pair with its translation and vector."""

    name: str
    command_id: int
    lang: str
    translated: str = ""
    vector: np.ndarray | None = None


def _medoid(pairs: list[_Pair]) -> _Pair:
    """Member nearest the arithmetic centroid under cosine distance.

    Distances are rounded before comparison so exact geometric ties (e.g.
    any two-member group) resolve by sorted (translated, raw-name) order
    instead of floating-point noise.
    """
    ordered = sorted(pairs, key=lambda p: (p.translated, p.name))
    vectors = np.stack([p.vector for p in ordered])
    centroid = vectors.mean(axis=0)
    norm = np.linalg.norm(centroid)
    if norm < 1e-12:
        return ordered[0]
    sims = vectors @ centroid / (np.linalg.norm(vectors, axis=1) * norm)
    distances = np.round(1.0 - sims, 12)
    return ordered[int(np.argmin(distances))]


def dedupe_pairs(sessions: Iterable[RawSession]) -> list[_Pair]:
    """Distinct (name, id) pairs in first-appearance order."""
    seen: dict[tuple[str, int], _Pair] = {}
    for session in sessions:
        for entry in session.entries:
            key = (entry.message, entry.command_id)
            if key not in seen:
                seen[key] = _Pair(entry.message, entry.command_id, entry.language)
    return list(seen.values())


def build_alignment_dictionary(
    sessions: list[RawSession],
    config: AlignmentConfig,
    translator: Translator,
    embedder: Embedder,
) -> tuple[AlignmentDictionary, AlignmentReport]:
    """Construct the canonical-name dictionary for a tracked corpus.

    Per command id: translate and embed every distinct raw name; if the
    group's mean pairwise cosine clears the threshold, all members adopt
    the medoid's translated name. Otherwise the group is density-clustered
    (ε chosen by silhouette) and each sub-cluster adopts its own medoid's
    name; noise points keep their individual translations. Failures are
    isolated per group and reported.
    """
    dictionary = AlignmentDictionary()
    report = AlignmentReport()
    groups: dict[int, list[_Pair]] = {}
    for pair in dedupe_pairs(sessions):
        groups.setdefault(pair.command_id, []).append(pair)

    for command_id in sorted(groups):
        members = groups[command_id]
        report.groups += 1
        try:
            for pair in members:
                result = translator.translate(pair.name, pair.lang)
                pair.translated = result.text
                if not result.translated and pair.lang not in ("en", "und", ""):
                    report.untranslated += 1
                pair.vector = embedder.embed(pair.translated)
        except ProviderError as exc:
            report.failed_groups.append({"id": command_id, "error": str(exc)})
            continue

        vectors = np.stack([p.vector for p in members])
        if pairwise_mean_cosine(vectors) >= config.similarity_threshold:
            canonical = _medoid(members).translated
            for pair in members:
                dictionary.add(pair.name, command_id, canonical, DIRECT)
            report.coherent_groups += 1
            continue

        if len(members) < 3:
            # Two dissimilar members have no density structure to cluster;
            # they are each their own identity.
            for pair in members:
                dictionary.add(pair.name, command_id, pair.translated, NOISE_SINGLETON)
            report.tiny_incoherent_groups += 1
            report.noise_pairs += len(members)
            continue

        choice = select_epsilon(vectors, config)
        if choice.degenerate:
            report.degenerate_epsilon_groups += 1
        labels = dbscan(vectors, choice.epsilon, config.min_points)
        report.clustered_groups += 1
        for label in sorted(set(labels)):
            cluster = [p for p, l in zip(members, labels) if l == label]
            if label == -1:
                for pair in cluster:
                    dictionary.add(pair.name, command_id, pair.translated, NOISE_SINGLETON)
                report.noise_pairs += len(cluster)
            else:
                canonical = _medoid(cluster).translated
                for pair in cluster:
                    dictionary.add(pair.name, command_id, canonical, SUB_CLUSTER)
    return dictionary, report


def apply_alignment(
    sessions: list[RawSession],
    dictionary: AlignmentDictionary,
    translator: Translator | None = None,
) -> list[RawSession]:
    """Rewrite every message to its canonical name.

    A pair the dictionary has never seen falls back to on-the-fly
    translation and joins the dictionary with provenance "late", keeping
    the mapping total as the corpus grows.
    """
    aligned: list[RawSession] = []
    for session in sessions:
        entries: list[LogEntry] = []
        for entry in session.entries:
            key = (entry.message, entry.command_id)
            if key not in dictionary:
                if translator is None:
                    raise KeyError(f"no canonical name for {key!r} and no translator")
                result = translator.translate(entry.message, entry.language)
                dictionary.add(entry.message, entry.command_id, result.text, LATE)
            canonical = dictionary.canonical(entry.message, entry.command_id)
            entries.append(
                LogEntry(
                    session_id=entry.session_id,
                    timestamp=entry.timestamp,
                    category=entry.category,
                    prefix=entry.prefix,
                    message=canonical,
                    command_id=entry.command_id,
                    language="en",
                )
            )
        aligned.append(RawSession(session.session_id, entries))
    return aligned
