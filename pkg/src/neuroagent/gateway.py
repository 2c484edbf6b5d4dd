"""HTTP gateway: session lifecycle, scan upload, query execution and live trace
streaming, backed by an append-only per-session event log plus a scan blob store.

Replaying a session's log reconstructs its scans, history and trace exactly,
so a restarted gateway serves the same trace stream it did before the crash.
"""

from __future__ import annotations

import hashlib
import json
import os
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from fastapi import FastAPI, Query as QueryParam, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from starlette.concurrency import run_in_threadpool

from . import nifti
from .config import GatewayConfig
from .coordinator import CoordinationStrategy
from .domain import (
    AgentResponse,
    DomainError,
    Modality,
    Query,
    ScanRef,
    SessionState,
    TraceEvent,
)
from .engine import run_episode
from .llm import LlmBackend, backend_from_config
from .registry import ToolRegistry, registry_from_manifests

MAX_SCAN_BYTES = 512 * 2**20
STREAM_POLL_SECONDS = 0.2


class GatewayError(Exception):
    code = "GatewayError"
    status = 400


class UnknownSessionError(GatewayError):
    code = "UnknownSession"
    status = 404


class PayloadTooLargeError(GatewayError):
    code = "PayloadTooLarge"
    status = 413


def error_payload(code: str, message: str) -> dict:
    return {"error": {"code": code, "message": message}}


class SessionStore:
    """Append-only JSONL event log per session plus a content-addressed blob store."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)
        (self.root / "scans").mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _log_path(self, session_id: str) -> Path:
        return self.root / "sessions" / f"{session_id}.jsonl"

    def append(self, session_id: str, record: dict) -> None:
        line = json.dumps(record, separators=(",", ":"))
        with self._lock:
            with open(self._log_path(session_id), "a") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def exists(self, session_id: str) -> bool:
        return self._log_path(session_id).exists()

    def read(self, session_id: str) -> list[dict]:
        path = self._log_path(session_id)
        if not path.exists():
            raise UnknownSessionError(f"no session {session_id!r}")
        return [json.loads(line) for line in path.read_text().splitlines() if line]

    def write_blob(self, scan_id: str, data: bytes, gzipped: bool) -> str:
        path = self.root / "scans" / f"{scan_id}.nii{'.gz' if gzipped else ''}"
        path.write_bytes(data)
        return str(path)


@dataclass
class SessionRuntime:
    state: SessionState
    strategy: CoordinationStrategy
    created_at: float
    lock: threading.Lock = field(default_factory=threading.Lock)
    subscribers: list["queue.SimpleQueue[TraceEvent]"] = field(default_factory=list)
    _sub_lock: threading.Lock = field(default_factory=threading.Lock)

    def subscribe(self) -> "queue.SimpleQueue[TraceEvent]":
        q: queue.SimpleQueue[TraceEvent] = queue.SimpleQueue()
        with self._sub_lock:
            self.subscribers.append(q)
        return q

    def unsubscribe(self, q: "queue.SimpleQueue[TraceEvent]") -> None:
        with self._sub_lock:
            if q in self.subscribers:
                self.subscribers.remove(q)

    def broadcast(self, event: TraceEvent) -> None:
        with self._sub_lock:
            for q in self.subscribers:
                q.put(event)


class GatewayService:
    """Session registry in front of the engine; one lock per session serializes
    its uploads and queries, streaming consumers are read-only."""

    def __init__(self, config: GatewayConfig, data_dir: str | Path | None = None):
        self.config = config
        self.store = SessionStore(data_dir or config.data_dir)
        self.registry: ToolRegistry = registry_from_manifests(config.manifests)
        self.llm: LlmBackend | None = backend_from_config(config.llm) if config.llm else None
        self._sessions: dict[str, SessionRuntime] = {}
        self._sessions_lock = threading.Lock()

    # -- session lifecycle ----------------------------------------------

    def create_session(self, strategy_config: dict | str | None = None) -> str:
        session_id = uuid.uuid4().hex
        strategy = (
            CoordinationStrategy.from_config(strategy_config)
            if strategy_config is not None
            else self.config.strategy
        )
        created_at = time.time()
        runtime = SessionRuntime(
            state=SessionState(session_id=session_id),
            strategy=strategy,
            created_at=created_at,
        )
        with self._sessions_lock:
            self._sessions[session_id] = runtime
        self.store.append(
            session_id,
            {
                "kind": "created",
                "session_id": session_id,
                "created_at": created_at,
                "strategy": strategy.to_dict(),
            },
        )
        return session_id

    def _load_runtime(self, session_id: str) -> SessionRuntime:
        records = self.store.read(session_id)
        state = SessionState(session_id=session_id)
        strategy = self.config.strategy
        created_at = 0.0
        for record in records:
            kind = record["kind"]
            if kind == "created":
                strategy = CoordinationStrategy.from_config(record["strategy"])
                created_at = record["created_at"]
            elif kind == "scan":
                state.put_scan(ScanRef.from_dict(record["scan"]))
            elif kind == "trace":
                state.append_event(TraceEvent.from_dict(record["event"]))
            elif kind == "exchange":
                state.add_exchange(
                    Query.from_dict(record["query"]),
                    AgentResponse.from_dict(record["response"]),
                )
        return SessionRuntime(state=state, strategy=strategy, created_at=created_at)

    def get_runtime(self, session_id: str) -> SessionRuntime:
        with self._sessions_lock:
            runtime = self._sessions.get(session_id)
            if runtime is None:
                runtime = self._load_runtime(session_id)
                self._sessions[session_id] = runtime
            return runtime

    # -- operations -------------------------------------------------------

    def upload_scan(self, session_id: str, declared: Modality, data: bytes) -> ScanRef:
        runtime = self.get_runtime(session_id)
        if len(data) > MAX_SCAN_BYTES:
            raise PayloadTooLargeError(f"scan exceeds the {MAX_SCAN_BYTES} byte cap")
        header = nifti.parse_bytes(data)
        scan_id = f"{declared.value}-{hashlib.sha256(data).hexdigest()[:12]}"
        gzipped = data[:2] == nifti.GZIP_MAGIC
        with runtime.lock:
            uri = self.store.write_blob(scan_id, data, gzipped)
            ref = nifti.validate_scan(header, declared, source_uri=uri, scan_id=scan_id)
            runtime.state.put_scan(ref)
            self.store.append(session_id, {"kind": "scan", "scan": ref.to_dict()})
        return ref

    def post_query(
        self, session_id: str, text: str, strategy_config: dict | str | None = None
    ) -> AgentResponse:
        runtime = self.get_runtime(session_id)
        strategy = (
            CoordinationStrategy.from_config(strategy_config)
            if strategy_config is not None
            else runtime.strategy
        )

        def persist_event(event: TraceEvent) -> None:
            self.store.append(session_id, {"kind": "trace", "event": event.to_dict()})
            runtime.broadcast(event)

        with runtime.lock:
            query = Query(session_id=session_id, text=text)
            response = run_episode(
                query,
                runtime.state,
                self.registry,
                strategy,
                llm=self.llm,
                on_event=persist_event,
            )
            self.store.append(
                session_id,
                {"kind": "exchange", "query": query.to_dict(), "response": response.to_dict()},
            )
        return response

    def stream_trace(
        self, session_id: str, from_seq: int = 0, follow: bool = True
    ) -> Iterator[TraceEvent | None]:
        """Persisted events with seq >= from_seq, then live events, each exactly once.

        Yields None between live events as a keepalive slot so consumers can
        detect disconnects; replay-only (follow=False) never yields None.
        """
        runtime = self.get_runtime(session_id)
        q = runtime.subscribe() if follow else None
        try:
            last = from_seq - 1
            for event in list(runtime.state.trace):
                if event.seq > last:
                    yield event
                    last = event.seq
            if q is None:
                return
            while True:
                try:
                    event = q.get(timeout=STREAM_POLL_SECONDS)
                except queue.Empty:
                    yield None  # keepalive slot
                    continue
                if event.seq > last:
                    yield event
                    last = event.seq
        finally:
            if q is not None:
                runtime.unsubscribe(q)

    def session_summary(self, session_id: str) -> dict:
        runtime = self.get_runtime(session_id)
        state = runtime.state
        return {
            "session_id": session_id,
            "created_at": runtime.created_at,
            "strategy": runtime.strategy.to_dict(),
            "scans": {m.value: ref.to_dict() for m, ref in sorted(state.scans.items())},
            "history_len": len(state.history),
            "trace_len": len(state.trace),
        }


def create_app(service: GatewayService) -> FastAPI:
    app = FastAPI(title="neuroagent gateway")
    # the console is served as static files from a different origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(GatewayError)
    async def gateway_error(_, exc: GatewayError):
        return JSONResponse(status_code=exc.status, content=error_payload(exc.code, str(exc)))

    @app.exception_handler(nifti.NiftiError)
    async def nifti_error(_, exc: nifti.NiftiError):
        return JSONResponse(status_code=400, content=error_payload(exc.code, str(exc)))

    @app.exception_handler(DomainError)
    async def domain_error(_, exc: DomainError):
        return JSONResponse(status_code=400, content=error_payload("InvalidRequest", str(exc)))

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/tools")
    def tools():
        return {"tools": [m.to_dict() for m in service.registry.manifests()]}

    @app.post("/sessions")
    async def create_session(request: Request):
        body = await request.body()
        strategy_config = json.loads(body).get("strategy") if body else None
        session_id = service.create_session(strategy_config)
        return {"session_id": session_id}

    @app.get("/sessions/{session_id}")
    def session_summary(session_id: str):
        return service.session_summary(session_id)

    @app.post("/sessions/{session_id}/scans")
    async def upload_scan(session_id: str, request: Request, modality: str = QueryParam(...)):
        try:
            declared = Modality(modality.lower())
        except ValueError:
            return JSONResponse(
                status_code=400,
                content=error_payload("InvalidRequest", f"unknown modality {modality!r}"),
            )
        data = await request.body()
        ref = await run_in_threadpool(service.upload_scan, session_id, declared, data)
        return ref.to_dict()

    @app.post("/sessions/{session_id}/query")
    async def post_query(session_id: str, request: Request):
        body = json.loads(await request.body())
        text = body.get("text", "")
        # optional per-episode strategy override (console strategy selector)
        strategy = body.get("strategy")
        response = await run_in_threadpool(service.post_query, session_id, text, strategy)
        return response.to_dict()

    @app.get("/sessions/{session_id}/trace")
    def stream_trace(session_id: str, from_seq: int = 0, follow: bool = True):
        service.get_runtime(session_id)  # surface UnknownSession before streaming

        def sse() -> Iterator[str]:
            for event in service.stream_trace(session_id, from_seq=from_seq, follow=follow):
                if event is None:
                    yield ": keepalive\n\n"
                else:
                    yield f"id: {event.seq}\ndata: {json.dumps(event.to_dict())}\n\n"

        return StreamingResponse(sse(), media_type="text/event-stream")

    return app


def app_from_config(path: str, data_dir: str | None = None) -> FastAPI:
    config = GatewayConfig.load(path)
    return create_app(GatewayService(config, data_dir=data_dir))
