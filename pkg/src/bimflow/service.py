"""HTTP serving for live command recommendation.

The service holds one deployed :class:`ServingBundle` (trained checkpoint
plus the frozen preprocessing assets it was trained against) and a
:class:`~bimflow.live.SessionStore` of in-flight sessions. Clients create a
session, stream raw events into it, and poll — or subscribe via SSE — for
the reshaped timeline and the model's next-command suggestions.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles

from .alignment import AlignmentDictionary
from .live import LiveSession, ProcessedStep, SessionStore, StreamPipeline
from .mining import CommandMapping
from .model.checkpoint import load_model
from .providers import Translator
from .tracking import FilterRules
from .types import Category, InteractionSequence, KNOWN_PREFIXES, LogEntry, parse_timestamp
from .workflows import BpeModel

MANIFEST_NAME = "manifest.json"
DEFAULT_SESSION_TTL = 3600.0


class VocabularySkewError(RuntimeError):
    """Checkpoint and preprocessing assets disagree about the vocabulary."""


@dataclass
class ServingBundle:
    """Everything one deployment needs to turn raw events into suggestions."""

    model: Any
    encoder: Any
    vocabulary: Any
    header: dict
    pipeline: StreamPipeline

    @classmethod
    def load(
        cls,
        checkpoint_path: str,
        assets_dir: str,
        translator: Translator | None = None,
    ) -> ServingBundle:
        assets = Path(assets_dir)
        model, encoder, vocabulary, header = load_model(checkpoint_path)

        manifest_path = assets / MANIFEST_NAME
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
            assets_hash = manifest.get("vocabulary_hash")
            model_hash = header.get("vocabulary_hash", vocabulary.content_hash())
            if assets_hash is not None and assets_hash != model_hash:
                raise VocabularySkewError(
                    "vocabulary skew between checkpoint and preprocessing assets: "
                    f"checkpoint has {model_hash}, assets manifest has {assets_hash}; "
                    "retrain or re-export so both artifacts share one vocabulary"
                )

        pipeline = StreamPipeline(
            rules=FilterRules.from_toml(str(assets / "rules.toml")),
            dictionary=AlignmentDictionary.load(str(assets / "dictionary.jsonl")),
            mapping=CommandMapping.load(str(assets / "mapping.jsonl")),
            bpe=BpeModel.load(str(assets / "workflows.json")),
            name_to_id=dict(vocabulary.index),
            translator=translator,
        )
        return cls(model, encoder, vocabulary, header, pipeline)

    def recommend(self, steps: list[ProcessedStep], k: int) -> list[dict]:
        """Rank the next command given a processed timeline.

        Steps with no vocabulary id (commands unseen at training time) stay
        on the timeline but carry no signal the model understands, so they
        are skipped here.
        """
        known = [s for s in steps if s.vocabulary_id is not None]
        if not known or k == 0:
            return []
        sequence = InteractionSequence(
            session_id="live",
            ids=[s.vocabulary_id for s in known],
            dt=[s.dt for s in known],
            occ=[s.occ for s in known],
            split="validation",
        )
        batch = self.encoder.encode_batch([sequence])
        ranked = self.model.recommend_top_k(batch, k)[0]
        out = []
        for dense_id, prob in ranked:
            name = self.vocabulary.name_of(dense_id)
            constituents = self.pipeline.workflow_constituents.get(name)
            out.append(
                {
                    "name": name,
                    "dense_id": dense_id,
                    "probability": prob,
                    "is_workflow": constituents is not None,
                    "constituents": list(constituents or ()),
                }
            )
        return out

    def vocabulary_payload(self) -> dict:
        type_labels = self.header.get("type_labels", [])
        target_labels = self.header.get("target_labels", [])
        items = []
        for dense_id, name in enumerate(self.vocabulary.names()):
            type_ix = int(self.encoder.type_of[dense_id + 1])
            target_ix = int(self.encoder.target_of[dense_id + 1])
            constituents = self.pipeline.workflow_constituents.get(name)
            items.append(
                {
                    "name": name,
                    "dense_id": dense_id,
                    "type": type_labels[type_ix - 1] if type_ix > 0 else None,
                    "target": target_labels[target_ix - 1] if target_ix > 0 else None,
                    "is_workflow": constituents is not None,
                    "constituents": list(constituents or ()),
                }
            )
        return {
            "size": len(self.vocabulary),
            "hash": self.vocabulary.content_hash(),
            "items": items,
        }


class _StreamHub:
    """Fan-out of per-session timeline updates to SSE subscribers."""

    def __init__(self) -> None:
        self._subscribers: dict[str, set[asyncio.Queue]] = {}

    def subscribe(self, session_id: str) -> asyncio.Queue:
        queue: asyncio.Queue = asyncio.Queue()
        self._subscribers.setdefault(session_id, set()).add(queue)
        return queue

    def unsubscribe(self, session_id: str, queue: asyncio.Queue) -> None:
        listeners = self._subscribers.get(session_id)
        if listeners is not None:
            listeners.discard(queue)
            if not listeners:
                self._subscribers.pop(session_id, None)

    def publish(self, session_id: str, payload: dict) -> None:
        for queue in self._subscribers.get(session_id, ()):
            queue.put_nowait(payload)


def _parse_event(session_id: str, body: dict) -> LogEntry:
    prefix = body.get("prefix")
    if prefix not in KNOWN_PREFIXES:
        raise HTTPException(422, f"unknown prefix: {prefix!r}")
    message = str(body.get("message", "")).strip()
    if not message:
        raise HTTPException(422, "event needs a non-empty message")
    try:
        category = Category(str(body.get("category", "Tool")))
    except ValueError:
        raise HTTPException(422, f"unknown category: {body.get('category')!r}")
    if "ts" in body:
        try:
            timestamp = parse_timestamp(str(body["ts"]))
        except ValueError:
            raise HTTPException(422, f"bad timestamp: {body['ts']!r}")
    else:
        timestamp = datetime.now(timezone.utc)
    try:
        command_id = int(body.get("command_id", -1))
    except (TypeError, ValueError):
        raise HTTPException(422, f"bad command_id: {body.get('command_id')!r}")
    return LogEntry(
        session_id=session_id,
        timestamp=timestamp,
        category=category,
        prefix=prefix,
        message=message,
        command_id=command_id,
        language=str(body.get("lang", "und")),
    )


def create_app(
    bundle: ServingBundle,
    static_dir: str | None = None,
    session_ttl: float = DEFAULT_SESSION_TTL,
) -> FastAPI:
    store = SessionStore(bundle.pipeline)
    hub = _StreamHub()

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        async def reaper() -> None:
            while True:
                await asyncio.sleep(60.0)
                store.expire(session_ttl)

        task = asyncio.create_task(reaper())
        try:
            yield
        finally:
            task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await task

    app = FastAPI(title="bimflow", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.store = store
    app.state.bundle = bundle

    def _session_or_404(session_id: str) -> LiveSession:
        session = store.get(session_id)
        if session is None:
            raise HTTPException(404, f"no live session {session_id!r}")
        return session

    @app.get("/v1/healthz")
    async def healthz() -> dict:
        return {
            "status": "ok",
            "sessions": len(store),
            "vocabulary_hash": bundle.vocabulary.content_hash(),
            "backbone": bundle.header.get("model_config", {}).get("backbone"),
        }

    @app.get("/v1/vocabulary")
    async def vocabulary() -> dict:
        return bundle.vocabulary_payload()

    @app.post("/v1/sessions", status_code=201)
    async def create_session() -> dict:
        session = store.create()
        return {"session_id": session.session_id}

    @app.get("/v1/sessions/{session_id}")
    async def session_state(session_id: str) -> dict:
        session = _session_or_404(session_id)
        steps = session.snapshot()
        return {
            "session_id": session_id,
            "events": len(session.events),
            "steps": [s.to_dict() for s in steps],
        }

    @app.post("/v1/sessions/{session_id}/events")
    async def append_event(session_id: str, request: Request) -> dict:
        session = _session_or_404(session_id)
        try:
            body = await request.json()
        except json.JSONDecodeError:
            raise HTTPException(422, "request body must be a JSON object")
        if not isinstance(body, dict):
            raise HTTPException(422, "request body must be a JSON object")
        entry = _parse_event(session_id, body)
        delta = session.append(entry)
        payload = {
            "session_id": session_id,
            "length": len(session.processed),
            **delta.to_dict(),
        }
        hub.publish(session_id, {"type": "delta", **payload})
        return payload

    @app.get("/v1/sessions/{session_id}/recommendations")
    async def recommendations(
        session_id: str, k: int = Query(default=5, ge=0, le=1000)
    ) -> dict:
        session = _session_or_404(session_id)
        steps = session.snapshot()
        session.touch()
        ranked = bundle.recommend(steps, k)
        payload: dict = {
            "session_id": session_id,
            "k": k,
            "recommendations": ranked,
        }
        if not ranked and k > 0:
            payload["message"] = (
                "no recognizable actions yet; recommendations start "
                "after the first known command"
            )
        return payload

    @app.get("/v1/sessions/{session_id}/stream")
    async def stream(session_id: str, request: Request) -> StreamingResponse:
        session = _session_or_404(session_id)
        queue = hub.subscribe(session_id)

        async def events():
            snapshot = {
                "type": "snapshot",
                "session_id": session_id,
                "steps": [s.to_dict() for s in session.snapshot()],
            }
            yield f"data: {json.dumps(snapshot)}\n\n"
            try:
                while True:
                    if await request.is_disconnected():
                        return
                    try:
                        payload = await asyncio.wait_for(queue.get(), timeout=15.0)
                    except asyncio.TimeoutError:
                        yield ": keep-alive\n\n"
                        continue
                    yield f"data: {json.dumps(payload)}\n\n"
            finally:
                hub.unsubscribe(session_id, queue)

        return StreamingResponse(
            events(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")

    return app
