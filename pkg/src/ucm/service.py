"""HTTP facade over the pipeline with file-based session persistence.

Every error body is ``{"code": .., "message": ..}`` with codes taken from the
pipeline/gateway/store vocabularies.  Mutations on one session are serialized
behind a per-session lock; distinct sessions progress concurrently.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

import ucm
from ucm.gateway.providers import (
    ENV_API_KEY,
    ENV_ENDPOINT,
    GatewayError,
    LiveProvider,
    Provider,
    ReplayProvider,
)
from ucm.model import InvalidModelError, RequirementsDoc, model_to_dict
from ucm.pipeline import (
    E_EMPTY_NAME,
    E_EMPTY_REQUIREMENTS,
    E_NO_MODEL,
    E_UNKNOWN_TARGET,
    E_UNKNOWN_USECASE,
    Edit,
    Engine,
    IllegalStageError,
    PipelineError,
    Session,
    session_to_dict,
)
from ucm.store import CorruptSessionError, SessionNotFound, SessionStore, StoreError

ENV_DATA_DIR = "UCM_DATA_DIR"

_UNPROCESSABLE = {E_UNKNOWN_TARGET, E_EMPTY_NAME, E_UNKNOWN_USECASE, E_EMPTY_REQUIREMENTS}


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    data_dir: Path = field(default_factory=lambda: Path(os.environ.get(ENV_DATA_DIR, "data")))
    cors_allowed_origin: str | None = None
    provider: str = "live"  # live | replay
    fixtures_dir: Path | None = None
    endpoint: str | None = None
    model_name: str | None = None
    api_key: str | None = None

    def __post_init__(self) -> None:
        if not 0 < self.port < 65536:
            raise ValueError(f"port {self.port} out of range")
        self.data_dir = Path(self.data_dir)


def build_provider(config: ServiceConfig) -> Provider:
    if config.provider == "replay":
        if config.fixtures_dir is None:
            raise ValueError("replay provider needs a fixtures directory")
        return ReplayProvider(config.fixtures_dir)
    endpoint = config.endpoint or os.environ.get(ENV_ENDPOINT)
    if not endpoint:
        raise ValueError(f"live provider needs an endpoint ({ENV_ENDPOINT})")
    return LiveProvider(endpoint, api_key=config.api_key or os.environ.get(ENV_API_KEY))


class CreateSessionBody(BaseModel):
    title: str
    text: str


class EditBody(BaseModel):
    stage: str
    kind: str
    target_id: str | None = None
    payload: dict[str, Any] = {}


class RunBody(BaseModel):
    usecase_ids: list[str] = []


class _ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(
    config: ServiceConfig,
    provider: Provider | None = None,
    engine_factory: Callable[[Provider], Engine] | None = None,
) -> FastAPI:
    """Assemble the service; tests may inject a provider or engine factory."""
    store = SessionStore(config.data_dir)
    active_provider = provider if provider is not None else build_provider(config)
    engine = (
        engine_factory(active_provider)
        if engine_factory is not None
        else Engine(active_provider, model_name=config.model_name)
    )

    app = FastAPI(title="ucm service", version=ucm.__version__)
    if config.cors_allowed_origin:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=[config.cors_allowed_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    sessions: dict[str, Session] = {}
    locks: dict[str, threading.Lock] = {}
    registry_lock = threading.Lock()

    def session_lock(session_id: str) -> threading.Lock:
        with registry_lock:
            if session_id not in locks:
                locks[session_id] = threading.Lock()
            return locks[session_id]

    def get_session(session_id: str) -> Session:
        with registry_lock:
            cached = sessions.get(session_id)
        if cached is not None:
            return cached
        try:
            loaded = store.load(session_id)
        except SessionNotFound as exc:
            raise _ApiError(404, exc.code, exc.message) from exc
        except CorruptSessionError as exc:
            raise _ApiError(500, exc.code, exc.message) from exc
        with registry_lock:
            sessions.setdefault(session_id, loaded)
            return sessions[session_id]

    def commit(session: Session) -> None:
        with registry_lock:
            sessions[session.id] = session
        store.save(session)

    @app.exception_handler(_ApiError)
    async def handle_api_error(_request: Request, exc: _ApiError) -> JSONResponse:
        return _error_response(exc.status, exc.code, exc.message)

    @app.exception_handler(RequestValidationError)
    async def handle_validation(_request: Request, exc: RequestValidationError) -> JSONResponse:
        return _error_response(400, "E-BAD-REQUEST", str(exc.errors()))

    def translate(exc: Exception) -> _ApiError:
        if isinstance(exc, IllegalStageError):
            return _ApiError(409, exc.code, exc.message)
        if isinstance(exc, PipelineError) and exc.code == E_NO_MODEL:
            return _ApiError(409, exc.code, exc.message)
        if isinstance(exc, PipelineError) and exc.code in _UNPROCESSABLE:
            return _ApiError(422, exc.code, exc.message)
        if isinstance(exc, PipelineError):  # E-REPAIR-FAILED and kin
            return _ApiError(502, exc.code, exc.message)
        if isinstance(exc, GatewayError):
            return _ApiError(502, exc.code, exc.message)
        if isinstance(exc, InvalidModelError):
            return _ApiError(422, "E-INVALID-MODEL", str(exc))
        if isinstance(exc, StoreError):
            return _ApiError(500, exc.code, exc.message)
        return _ApiError(500, "E-INTERNAL", f"{type(exc).__name__}: {exc}")

    @app.get("/health")
    def health() -> dict[str, str]:
        return {"status": "ok", "version": ucm.__version__}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody) -> dict[str, Any]:
        try:
            doc = RequirementsDoc(id="pending", title=body.title, text=body.text)
            session = engine.start_session(doc)
            session.requirements = RequirementsDoc(
                id=session.id, title=body.title, text=body.text
            )
        except PipelineError as exc:
            raise translate(exc) from exc
        commit(session)
        return session_to_dict(session)

    @app.get("/sessions")
    def list_sessions() -> list[dict[str, Any]]:
        with registry_lock:
            known = dict(sessions)
        for session_id in store.list_ids():
            if session_id not in known:
                try:
                    known[session_id] = store.load(session_id)
                except StoreError:
                    continue
        return [
            {
                "id": s.id,
                "title": s.requirements.title,
                "stage": s.stage.value,
                "created_at": s.created_at.isoformat(),
            }
            for s in sorted(known.values(), key=lambda s: s.id)
        ]

    @app.get("/sessions/{session_id}")
    def get_session_json(session_id: str) -> dict[str, Any]:
        return session_to_dict(get_session(session_id))

    @app.post("/sessions/{session_id}/stages/{stage}/run")
    def run_stage(session_id: str, stage: str, body: RunBody | None = None) -> dict[str, Any]:
        if stage not in ("actors", "usecases", "model", "descriptions"):
            raise _ApiError(404, "E-NOT-FOUND", f"unknown stage {stage!r}")
        lock = session_lock(session_id)
        with lock:
            session = get_session(session_id)
            try:
                if stage == "actors":
                    engine.run_actor_stage(session)
                elif stage == "usecases":
                    engine.run_usecase_stage(session)
                elif stage == "model":
                    engine.run_model_stage(session)
                else:
                    ids = body.usecase_ids if body is not None else []
                    engine.run_description_stage(session, ids)
            except Exception as exc:  # noqa: BLE001 - translated to HTTP codes
                raise translate(exc) from exc
            commit(session)
            return session_to_dict(session)

    @app.post("/sessions/{session_id}/edits")
    def apply_edits(session_id: str, body: list[EditBody]) -> dict[str, Any]:
        lock = session_lock(session_id)
        with lock:
            session = get_session(session_id)
            try:
                edits = [
                    Edit.from_dict(
                        {
                            "stage": e.stage,
                            "kind": e.kind,
                            "target_id": e.target_id,
                            "payload": e.payload,
                        }
                    )
                    for e in body
                ]
            except ValueError as exc:
                raise _ApiError(422, "E-BAD-EDIT", str(exc)) from exc
            try:
                engine.apply_edits(session, edits)
            except Exception as exc:  # noqa: BLE001
                raise translate(exc) from exc
            commit(session)
            return session_to_dict(session)

    @app.post("/sessions/{session_id}/confirm")
    def confirm(session_id: str) -> dict[str, Any]:
        lock = session_lock(session_id)
        with lock:
            session = get_session(session_id)
            try:
                engine.confirm(session)
            except Exception as exc:  # noqa: BLE001
                raise translate(exc) from exc
            commit(session)
            return session_to_dict(session)

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str, format: str = "json"):
        if format not in ("json", "puml"):
            raise _ApiError(400, "E-BAD-REQUEST", f"unknown format {format!r}")
        session = get_session(session_id)
        try:
            document = engine.export(session, format)
        except Exception as exc:  # noqa: BLE001
            raise translate(exc) from exc
        if format == "puml":
            return PlainTextResponse(document, media_type="text/plain; charset=utf-8")
        return JSONResponse(content=session_to_dict(session))

    @app.get("/sessions/{session_id}/model")
    def get_model(session_id: str) -> dict[str, Any]:
        session = get_session(session_id)
        if session.model is None:
            raise _ApiError(409, E_NO_MODEL, "the session has no model yet")
        return model_to_dict(session.model)

    return app


def run_service(config: ServiceConfig, provider: Provider | None = None) -> None:
    """Blocking uvicorn runner used by `ucm serve`."""
    import uvicorn

    app = create_app(config, provider=provider)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
