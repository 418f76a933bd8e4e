"""Pluggable translation, embedding, and text-generation providers.

Alignment and augmentation depend on external services (a translation API,
an embedding model, a chat model). Each capability is a small contract with
three interchangeable implementations:

* ``fixture`` — reads canned responses from a JSONL file; strict about
  unknown inputs so tests fail loudly on missing fixtures.
* ``stub`` — fully deterministic local fallback (hash-derived vectors,
  template text); useful for load tests and offline smoke runs.
* ``live`` — HTTP JSON client with a bounded retry budget.

Configuration comes from a TOML file with environment-variable overrides.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np


class ProviderError(RuntimeError):
    """Unrecoverable provider failure (bad config, exhausted retries)."""


class TransportError(ProviderError):
    """A retryable transport-level failure."""


@dataclass
class ProviderSettings:
    """Connection settings shared by live providers."""

    endpoint: str = ""
    api_key_env: str = "BIMFLOW_API_KEY"
    timeout_s: float = 10.0
    retries: int = 3

    def api_key(self) -> str:
        return os.environ.get(self.api_key_env, "")


def _with_retries(settings: ProviderSettings, call):
    last: Exception | None = None
    for attempt in range(settings.retries + 1):
        try:
            return call()
        except TransportError as exc:
            last = exc
            if attempt < settings.retries:
                time.sleep(min(0.05 * 2**attempt, 1.0))
    raise ProviderError(f"retry budget exhausted: {last}") from last


# ---------------------------------------------------------------------------
# Translation
# ---------------------------------------------------------------------------


@dataclass
class Translation:
    """A translation outcome; ``translated`` is False on passthrough."""

    text: str
    translated: bool = True


class Translator:
    """Contract: :meth:`translate` returns English text for a raw name."""

    def translate(self, name: str, source_lang: str) -> Translation:
        raise NotImplementedError


class FixtureTranslator(Translator):
    """Translations from a JSONL fixture keyed by (text, lang)."""

    def __init__(self, path: str):
        self.table: dict[tuple[str, str], str] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                self.table[(row["text"], row["lang"])] = row["translation"]

    def translate(self, name: str, source_lang: str) -> Translation:
        if source_lang in ("en", "und", ""):
            return Translation(name)
        try:
            return Translation(self.table[(name, source_lang)])
        except KeyError:
            raise ProviderError(
                f"no fixture translation for {name!r} ({source_lang})"
            ) from None


class StubTranslator(Translator):
    """Deterministic offline translator: passes names through unchanged."""

    def translate(self, name: str, source_lang: str) -> Translation:
        return Translation(name, translated=source_lang in ("en", "und", ""))


class LiveTranslator(Translator):
    """HTTP translator; after the retry budget the raw name passes through."""

    def __init__(self, settings: ProviderSettings):
        self.settings = settings

    def _request(self, name: str, source_lang: str) -> str:
        import httpx

        try:
            resp = httpx.post(
                self.settings.endpoint,
                json={"text": name, "source": source_lang, "target": "en"},
                headers={"Authorization": f"Bearer {self.settings.api_key()}"},
                timeout=self.settings.timeout_s,
            )
        except httpx.TransportError as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code >= 500:
            raise TransportError(f"server error {resp.status_code}")
        if resp.status_code != 200:
            raise ProviderError(f"translation failed: {resp.status_code} {resp.text}")
        return str(resp.json()["translation"])

    def translate(self, name: str, source_lang: str) -> Translation:
        if source_lang in ("en", "und", ""):
            return Translation(name)
        try:
            return Translation(_with_retries(self.settings, lambda: self._request(name, source_lang)))
        except ProviderError:
            # Keep the pipeline total: an untranslatable name flows on
            # unchanged, visibly tagged for diagnostics.
            return Translation(name, translated=False)


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------


def _check_unit(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if not np.isfinite(norm) or abs(norm - 1.0) > 1e-6:
        raise ProviderError(f"embedding is not unit-normalized (‖v‖={norm})")
    return vec


class Embedder:
    """Contract: :meth:`embed` maps text to a unit vector of fixed dimension."""

    dimension: int

    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError


class FixtureEmbedder(Embedder):
    """Embeddings from a JSONL fixture keyed by exact text."""

    def __init__(self, path: str, dimension: int | None = None):
        self.table: dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                self.table[row["text"]] = _check_unit(np.asarray(row["vector"]))
        if not self.table:
            raise ProviderError(f"empty embedding fixture: {path}")
        dims = {v.shape[0] for v in self.table.values()}
        if len(dims) != 1:
            raise ProviderError(f"mixed embedding dimensions in fixture: {sorted(dims)}")
        self.dimension = dims.pop()
        if dimension is not None and dimension != self.dimension:
            raise ProviderError(
                f"fixture dimension {self.dimension} != configured {dimension}"
            )

    def embed(self, text: str) -> np.ndarray:
        try:
            return self.table[text]
        except KeyError:
            raise ProviderError(f"no fixture embedding for {text!r}") from None


class StubEmbedder(Embedder):
    """Hash-seeded unit vectors: deterministic, identical texts collide.

    Vectors are near-orthogonal for distinct texts, which is exactly what a
    load test wants; there is no semantic structure.
    """

    def __init__(self, dimension: int = 64):
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "little")
        rng = np.random.default_rng(seed)
        vec = rng.standard_normal(self.dimension)
        return vec / np.linalg.norm(vec)


class LiveEmbedder(Embedder):
    def __init__(self, settings: ProviderSettings, dimension: int):
        self.settings = settings
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        import httpx

        def call() -> np.ndarray:
            try:
                resp = httpx.post(
                    self.settings.endpoint,
                    json={"input": text},
                    headers={"Authorization": f"Bearer {self.settings.api_key()}"},
                    timeout=self.settings.timeout_s,
                )
            except httpx.TransportError as exc:
                raise TransportError(str(exc)) from exc
            if resp.status_code >= 500:
                raise TransportError(f"server error {resp.status_code}")
            if resp.status_code != 200:
                raise ProviderError(f"embedding failed: {resp.status_code}")
            vec = np.asarray(resp.json()["embedding"], dtype=np.float64)
            if vec.shape != (self.dimension,):
                raise ProviderError(
                    f"embedding dimension {vec.shape} != configured ({self.dimension},)"
                )
            return vec / np.linalg.norm(vec)

        return _with_retries(self.settings, call)


# ---------------------------------------------------------------------------
# Text generation (documentation summarization)
# ---------------------------------------------------------------------------


class TextGenerator:
    """Contract: :meth:`describe` produces meta-information for a command.

    The response is a dict with ``description``, ``type`` and ``target``
    keys; the caller supplies retrieved documentation context.
    """

    def describe(self, name: str, context: str, is_workflow: bool = False,
                 constituents: list[str] | None = None) -> dict[str, str]:
        raise NotImplementedError


class FixtureTextGenerator(TextGenerator):
    """Canned meta responses keyed by command name."""

    def __init__(self, path: str):
        self.table: dict[str, dict[str, str]] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                self.table[row["name"]] = {
                    "description": row["description"],
                    "type": row["type"],
                    "target": row["target"],
                }

    def describe(self, name: str, context: str, is_workflow: bool = False,
                 constituents: list[str] | None = None) -> dict[str, str]:
        try:
            return dict(self.table[name])
        except KeyError:
            raise ProviderError(f"no fixture meta for {name!r}") from None


class StubTextGenerator(TextGenerator):
    """Template meta: usable structure, no real semantics."""

    def describe(self, name: str, context: str, is_workflow: bool = False,
                 constituents: list[str] | None = None) -> dict[str, str]:
        if is_workflow:
            steps = ", ".join(constituents or [])
            return {
                "description": f"Performs the steps {steps} as one workflow.",
                "type": "Workflow",
                "target": "Object",
            }
        words = name.split()
        return {
            "description": f"Executes the {name} command.",
            "type": words[0].title() if words else "Unknown",
            "target": words[-1].title() if len(words) > 1 else "Object",
        }


class LiveTextGenerator(TextGenerator):
    def __init__(self, settings: ProviderSettings):
        self.settings = settings

    def describe(self, name: str, context: str, is_workflow: bool = False,
                 constituents: list[str] | None = None) -> dict[str, str]:
        import httpx

        def call() -> dict[str, str]:
            try:
                resp = httpx.post(
                    self.settings.endpoint,
                    json={
                        "command": name,
                        "context": context,
                        "is_workflow": is_workflow,
                        "constituents": constituents or [],
                    },
                    headers={"Authorization": f"Bearer {self.settings.api_key()}"},
                    timeout=self.settings.timeout_s,
                )
            except httpx.TransportError as exc:
                raise TransportError(str(exc)) from exc
            if resp.status_code >= 500:
                raise TransportError(f"server error {resp.status_code}")
            if resp.status_code != 200:
                raise ProviderError(f"generation failed: {resp.status_code}")
            data = resp.json()
            return {
                "description": str(data["description"]),
                "type": str(data["type"]),
                "target": str(data["target"]),
            }

        return _with_retries(self.settings, call)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class ProviderConfig:
    """Parsed provider configuration (TOML + environment overrides)."""

    translation_kind: str = "stub"
    translation_fixture: str = ""
    embedding_kind: str = "stub"
    embedding_fixture: str = ""
    embedding_dimension: int | None = None
    llm_kind: str = "stub"
    llm_fixture: str = ""
    settings: ProviderSettings = field(default_factory=ProviderSettings)

    @classmethod
    def from_toml(cls, path: str) -> ProviderConfig:
        import tomli

        with open(path, "rb") as fh:
            data = tomli.load(fh)
        cfg = cls()
        base = os.path.dirname(os.path.abspath(path))

        def resolve(p: str) -> str:
            return p if os.path.isabs(p) else os.path.join(base, p)

        tr = data.get("translation", {})
        cfg.translation_kind = tr.get("kind", cfg.translation_kind)
        cfg.translation_fixture = resolve(tr.get("fixture_path", "")) if tr.get("fixture_path") else ""
        em = data.get("embedding", {})
        cfg.embedding_kind = em.get("kind", cfg.embedding_kind)
        cfg.embedding_fixture = resolve(em.get("fixture_path", "")) if em.get("fixture_path") else ""
        if "dimension" in em:
            cfg.embedding_dimension = int(em["dimension"])
        llm = data.get("llm", {})
        cfg.llm_kind = llm.get("kind", cfg.llm_kind)
        cfg.llm_fixture = resolve(llm.get("fixture_path", "")) if llm.get("fixture_path") else ""
        live = data.get("live", {})
        cfg.settings = ProviderSettings(
            endpoint=live.get("endpoint", ""),
            api_key_env=live.get("api_key_env", "BIMFLOW_API_KEY"),
            timeout_s=float(live.get("timeout_s", 10.0)),
            retries=int(live.get("retries", 3)),
        )
        cfg.apply_env_overrides()
        return cfg

    def apply_env_overrides(self) -> None:
        env = os.environ
        self.settings.endpoint = env.get("BIMFLOW_PROVIDER_ENDPOINT", self.settings.endpoint)
        self.settings.api_key_env = env.get("BIMFLOW_PROVIDER_API_KEY_ENV", self.settings.api_key_env)
        if "BIMFLOW_PROVIDER_TIMEOUT_S" in env:
            self.settings.timeout_s = float(env["BIMFLOW_PROVIDER_TIMEOUT_S"])
        if "BIMFLOW_PROVIDER_RETRIES" in env:
            self.settings.retries = int(env["BIMFLOW_PROVIDER_RETRIES"])

    def make_translator(self) -> Translator:
        if self.translation_kind == "fixture":
            return FixtureTranslator(self.translation_fixture)
        if self.translation_kind == "stub":
            return StubTranslator()
        if self.translation_kind == "live":
            return LiveTranslator(self.settings)
        raise ProviderError(f"unknown translation provider kind: {self.translation_kind!r}")

    def make_embedder(self) -> Embedder:
        if self.embedding_kind == "fixture":
            return FixtureEmbedder(self.embedding_fixture, self.embedding_dimension)
        if self.embedding_kind == "stub":
            return StubEmbedder(self.embedding_dimension or 64)
        if self.embedding_kind == "live":
            if self.embedding_dimension is None:
                raise ProviderError("live embedding provider requires a configured dimension")
            return LiveEmbedder(self.settings, self.embedding_dimension)
        raise ProviderError(f"unknown embedding provider kind: {self.embedding_kind!r}")

    def make_text_generator(self) -> TextGenerator:
        if self.llm_kind == "fixture":
            return FixtureTextGenerator(self.llm_fixture)
        if self.llm_kind == "stub":
            return StubTextGenerator()
        if self.llm_kind == "live":
            return LiveTextGenerator(self.settings)
        raise ProviderError(f"unknown llm provider kind: {self.llm_kind!r}")


def load_providers(path: str | None) -> ProviderConfig:
    """Provider config from a TOML path, or all-stub defaults when absent."""
    if path:
        return ProviderConfig.from_toml(path)
    cfg = ProviderConfig()
    cfg.apply_env_overrides()
    return cfg
