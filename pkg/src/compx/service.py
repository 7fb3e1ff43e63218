"""HTTP API for sessions, traces, and artifacts.

Sessions execute asynchronously in worker threads; clients poll
GET /sessions/{id} (state) and /trace (progress). Every non-2xx response
carries a JSON body {"status", "code", "message"}. A follow-up instruction
posted to a terminal session re-plans against the same image and appends a
new trace segment with its own iteration cap.
"""

from __future__ import annotations

import json
import mimetypes
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from . import agent, llmclient, testimages
from .errors import CompxError

STATES = ("planning", "pre_analysis", "encoding", "evaluating", "refining",
          "done", "failed")
PLANNER_MODES = ("rules", "llm", "llm_with_fallback")


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class Session:
    id: str
    instruction: str
    image_path: Path
    planner: str
    transport_ref: str
    directory: Path
    state: str = "planning"
    error: dict | None = None
    traces: list[agent.SessionTrace] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    created_at: float = 0.0

    def snapshot(self) -> dict:
        with self.lock:
            return {
                "id": self.id,
                "state": self.state,
                "segments": len(self.traces),
                "created_at": self.created_at,
                "error": self.error,
            }

    def trace_doc(self) -> dict:
        with self.lock:
            return {
                "id": self.id,
                "state": self.state,
                "segments": [t.to_json_dict() for t in self.traces],
            }

    @property
    def terminal(self) -> bool:
        return self.state in ("done", "failed")


def _build_deps(session: Session, segment_index: int) -> tuple[str, agent.SessionDeps]:
    out_dir = session.directory / f"segment_{segment_index}"
    if session.transport_ref.startswith("fixture:"):
        name = session.transport_ref.split(":", 1)[1]
        instruction, deps = agent.fixture_deps(name, out_dir=out_dir)
        if segment_index == 0:
            return instruction, deps
        # follow-ups on a fixture session refine against the real codec
        deps = agent.SessionDeps(image_path=session.image_path, planner="rules",
                                 out_dir=out_dir)
        return session.instruction, deps
    deps = agent.SessionDeps(
        image_path=session.image_path,
        planner=session.planner,
        out_dir=out_dir,
    )
    if session.planner in ("llm", "llm_with_fallback"):
        deps.chat_config = llmclient.ChatConfig.from_env()
        deps.proposer = "llm"
    return session.instruction, deps


def _run_pipeline(session: Session, instruction: str, deps: agent.SessionDeps) -> None:
    def on_stage(name: str) -> None:
        with session.lock:
            session.state = name

    def trace_sink(trace: agent.SessionTrace) -> None:
        with session.lock:
            session.traces.append(trace)

    try:
        trace = agent.run_session(instruction, deps, on_stage=on_stage,
                                  trace_sink=trace_sink)
        with session.lock:
            if all(t is not trace for t in session.traces):
                session.traces.append(trace)
            session.state = "done"
    except agent.StageError as exc:
        with session.lock:
            if exc.trace is not None:
                exc.trace.outcome = "failed"
                if all(t is not exc.trace for t in session.traces):
                    session.traces.append(exc.trace)
            session.state = "failed"
            session.error = {"stage": exc.stage, "code": exc.cause.code
                             if isinstance(exc.cause, CompxError) else "error",
                             "message": str(exc.cause)}
    except Exception as exc:  # pragma: no cover - defensive
        with session.lock:
            session.state = "failed"
            session.error = {"stage": "unknown", "code": "error", "message": str(exc)}


class SessionRegistry:
    def __init__(self, root: Path):
        self.root = root
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, instruction: str, image_path: Path, planner: str,
               transport_ref: str) -> Session:
        import time

        session_id = uuid.uuid4().hex[:12]
        session = Session(
            id=session_id,
            instruction=instruction,
            image_path=image_path,
            planner=planner,
            transport_ref=transport_ref,
            directory=self.root / session_id,
            created_at=time.time(),
        )
        session.directory.mkdir(parents=True, exist_ok=True)
        with self._lock:
            self._sessions[session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise ApiError(404, "UnknownSession", f"no session {session_id!r}")
        return session


async def _read_create_request(request: Request, image_root: Path):
    content_type = request.headers.get("content-type", "")
    if content_type.startswith("multipart/form-data"):
        form = await request.form()
        instruction = str(form.get("instruction") or "")
        planner = str(form.get("planner") or "rules")
        transport_ref = str(form.get("transport") or "live")
        upload = form.get("image")
        if upload is None or isinstance(upload, str):
            raise ApiError(400, "MissingField", "multipart body needs an image file")
        image_path = image_root / "uploads" / f"{uuid.uuid4().hex[:8]}_{upload.filename}"
        image_path.parent.mkdir(parents=True, exist_ok=True)
        image_path.write_bytes(await upload.read())
        return instruction, image_path, planner, transport_ref
    try:
        body = await request.json()
    except json.JSONDecodeError as exc:
        raise ApiError(400, "MissingField", f"body is not valid JSON: {exc}") from exc
    if not isinstance(body, dict):
        raise ApiError(400, "MissingField", "body must be a JSON object")
    instruction = str(body.get("instruction") or "")
    planner = str(body.get("planner") or "rules")
    transport_ref = str(body.get("transport") or "live")
    image_value = body.get("image")
    if not image_value:
        raise ApiError(400, "MissingField", "body needs an image path")
    image_path = Path(image_value)
    if not image_path.is_absolute():
        image_path = image_root / image_path
    return instruction, image_path, planner, transport_ref


def create_app(root: str | Path | None = None, ui_dir: str | Path | None = None,
               materialize_demo_images: bool = True) -> FastAPI:
    """Build the service app; ``root`` holds session dirs and demo images."""
    root = Path(root) if root is not None else Path.cwd() / "compx_sessions"
    root.mkdir(parents=True, exist_ok=True)
    image_root = root / "images"
    if materialize_demo_images and not image_root.is_dir():
        testimages.write_test_images(image_root)
    registry = SessionRegistry(root / "sessions")

    app = FastAPI(title="compx service", version="0.1.0")
    app.state.registry = registry
    app.state.image_root = root

    @app.exception_handler(ApiError)
    async def _api_error(_request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"status": exc.status, "code": exc.code,
                                     "message": exc.message})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_request, exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content={"status": 400, "code": "MissingField",
                                     "message": str(exc)})

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        instruction, image_path, planner, transport_ref = await _read_create_request(
            request, root)
        if not instruction.strip():
            raise ApiError(400, "MissingField", "instruction must be nonempty")
        if planner not in PLANNER_MODES:
            raise ApiError(422, "InvalidPlannerMode",
                           f"planner must be one of {PLANNER_MODES}")
        if transport_ref != "live" and not transport_ref.startswith("fixture:"):
            raise ApiError(422, "InvalidTransport",
                           "transport must be 'live' or 'fixture:<name>'")
        if transport_ref.startswith("fixture:"):
            try:
                agent.load_fixture(transport_ref.split(":", 1)[1])
            except CompxError as exc:
                raise ApiError(422, "InvalidTransport", str(exc)) from exc
        if not image_path.is_file():
            raise ApiError(404, "ImageNotFound", f"no image at {image_path}")
        session = registry.create(instruction, image_path, planner, transport_ref)
        instruction_resolved, deps = _build_deps(session, 0)
        thread = threading.Thread(target=_run_pipeline,
                                  args=(session, instruction_resolved, deps),
                                  daemon=True)
        thread.start()
        return {"id": session.id}

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str):
        return registry.get(session_id).snapshot()

    @app.get("/sessions/{session_id}/trace")
    async def get_trace(session_id: str):
        return registry.get(session_id).trace_doc()

    @app.post("/sessions/{session_id}/message")
    async def post_message(session_id: str, request: Request):
        session = registry.get(session_id)
        if not session.terminal:
            raise ApiError(409, "SessionBusy",
                           "session is still running; wait for a terminal state")
        try:
            body = await request.json()
        except json.JSONDecodeError as exc:
            raise ApiError(400, "MissingField", "body is not valid JSON") from exc
        instruction = str(body.get("instruction") or "")
        if not instruction.strip():
            raise ApiError(400, "MissingField", "instruction must be nonempty")
        with session.lock:
            segment_index = len(session.traces)
            session.instruction = instruction
            session.state = "planning"
            session.error = None
        _, deps = _build_deps(session, segment_index)
        thread = threading.Thread(target=_run_pipeline,
                                  args=(session, instruction, deps), daemon=True)
        thread.start()
        return {"id": session.id, "segment": segment_index}

    @app.get("/sessions/{session_id}/artifacts/{kind}")
    async def get_artifact(session_id: str, kind: str):
        session = registry.get(session_id)
        if kind not in ("original", "recon", "mask", "stream", "plan"):
            raise ApiError(404, "UnknownArtifact", f"unknown artifact kind {kind!r}")
        if kind == "original":
            data = session.image_path.read_bytes()
            media = mimetypes.guess_type(str(session.image_path))[0] or "application/octet-stream"
            return Response(content=data, media_type=media)
        if kind == "plan":
            with session.lock:
                if not session.traces:
                    raise ApiError(409, "NotReadyYet", "planning has not finished")
                return JSONResponse(session.traces[-1].plan.to_json_dict())
        # file artifacts of the latest segment
        if not session.terminal:
            raise ApiError(409, "NotReadyYet", "session is still running")
        with session.lock:
            if not session.traces:
                raise ApiError(404, "ArtifactMissing", "session produced no trace")
            segment_index = len(session.traces) - 1
            chosen = session.traces[-1].chosen_iteration
        segment_dir = session.directory / f"segment_{segment_index}"
        if kind == "mask":
            path = segment_dir / "mask.png"
            media = "image/png"
        elif kind == "recon":
            path = segment_dir / f"iter_{chosen}" / "recon.png"
            media = "image/png"
        else:
            path = segment_dir / f"iter_{chosen}" / "stream.ssbx"
            media = "application/octet-stream"
        if chosen is None or not path.is_file():
            raise ApiError(404, "ArtifactMissing", f"no {kind} artifact for session")
        return Response(content=path.read_bytes(), media_type=media)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
