"""HTTP facade over the tutoring engine.

Endpoints: POST /sessions, POST /sessions/{id}/messages, GET /sessions/{id},
GET /problems, GET /health. Solutions and final answers never leave the
server: problem payloads are built field by field and a contract test scans
every response for leaks. Request logs are one JSON object per line.
"""
from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .dataset import load_dataset
from .llm import HttpBackend, LLMClient, LLMError
from .orchestrator import SessionConfig, SessionNotActive, SessionState
from .prompting import SocraticPrompt, default_prompt
from .sessions import SessionStore, TutorEngine, UnknownSessionError
from .types import MathProblem, Speaker

logger = logging.getLogger("socratic_tutor.service")

ENV_PREFIX = "SOCTUTOR_"


@dataclass(frozen=True)
class ApiConfig:
    bind_address: str = "127.0.0.1:8080"
    backend_url: str = "http://127.0.0.1:9000/v1"
    prompt_version: str = "1.0.0"
    max_turns: int = 10
    data_dir: str = "./data"
    problems_path: str | None = None  # default: <data_dir>/problems.json
    api_key: str | None = None
    model_name: str = "default"
    temperature: float = 0.7

    def __post_init__(self) -> None:
        if self.max_turns < 2:
            raise ValueError("max_turns must be >= 2")

    @property
    def host(self) -> str:
        return self.bind_address.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.bind_address.rsplit(":", 1)[1])


_CONFIG_KEYS = (
    "bind_address",
    "backend_url",
    "prompt_version",
    "max_turns",
    "data_dir",
    "problems_path",
    "api_key",
    "model_name",
    "temperature",
)


def load_config(path: str | Path | None = None) -> ApiConfig:
    """Config file values overridden by SOCTUTOR_* environment variables."""
    raw: dict[str, Any] = {}
    if path is not None:
        raw.update(json.loads(Path(path).read_text(encoding="utf-8")))
    for key in _CONFIG_KEYS:
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            if key == "max_turns":
                raw[key] = int(env)
            elif key == "temperature":
                raw[key] = float(env)
            else:
                raw[key] = env
    unknown = set(raw) - set(_CONFIG_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ApiConfig(**raw)


class CreateSessionBody(BaseModel):
    problem_id: str


class PostMessageBody(BaseModel):
    text: str


def problem_summary(problem: MathProblem) -> dict[str, Any]:
    # Built field by field on purpose: solution_steps / final_answer must
    # never be serialized to clients.
    return {
        "id": problem.id,
        "question_text": problem.question_text,
        "question_type": problem.question_type.value,
        "knowledge_points": list(problem.knowledge_points),
        "difficulty": problem.difficulty,
    }


def _transcript(state: SessionState) -> dict[str, Any]:
    utterances = []
    for event in state.log:
        if event.type == "teacher_turn":
            utterances.append(
                {
                    "role": Speaker.TEACHER.value,
                    "text": event.payload["text"],
                    "phase": event.payload["phase"],
                    "timestamp": event.timestamp,
                }
            )
        elif event.type == "student_turn":
            utterances.append(
                {
                    "role": Speaker.STUDENT.value,
                    "text": event.payload["text"],
                    "timestamp": event.timestamp,
                }
            )
    return {
        "session_id": state.session_id,
        "problem_id": state.problem.id,
        "status": state.status.value,
        "phase": state.phase.value,
        "turn_count": state.turn_count,
        "max_turns": state.max_turns,
        "created_at": state.created_at,
        "updated_at": state.updated_at,
        "utterances": utterances,
    }


def create_app(
    config: ApiConfig,
    *,
    llm: LLMClient | None = None,
    problems: Mapping[str, MathProblem] | None = None,
    prompt: SocraticPrompt | None = None,
) -> FastAPI:
    data_dir = Path(config.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(data_dir, os.W_OK):
        raise ValueError(f"data_dir {data_dir} is not writable")

    if problems is None:
        problems_path = config.problems_path or str(data_dir / "problems.json")
        problems = load_dataset(problems_path).problems

    if llm is None:
        llm = LLMClient(HttpBackend(config.backend_url))

    prompt = prompt or default_prompt()
    if prompt.version != config.prompt_version:
        raise ValueError(
            f"configured prompt_version {config.prompt_version!r} does not match "
            f"loaded prompt {prompt.version!r}"
        )

    engine = TutorEngine(
        problems,
        llm,
        SessionStore(data_dir / "sessions"),
        prompt=prompt,
        config=SessionConfig(
            max_turns=config.max_turns,
            temperature=config.temperature,
            model_name=config.model_name,
        ),
    )

    app = FastAPI(title="socratic-tutor", docs_url=None, redoc_url=None)
    app.state.engine = engine
    app.state.config = config

    # the browser client may be hosted separately from the API
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["GET", "POST"],
        allow_headers=["content-type", "x-api-key"],
    )

    @app.middleware("http")
    async def request_log(request: Request, call_next):
        started = time.monotonic()
        response: Response = await call_next(request)
        logger.info(
            json.dumps(
                {
                    "method": request.method,
                    "path": request.url.path,
                    "status": response.status_code,
                    "duration_ms": int((time.monotonic() - started) * 1000),
                },
                ensure_ascii=False,
            )
        )
        return response

    if config.api_key:

        @app.middleware("http")
        async def check_api_key(request: Request, call_next):
            if request.url.path != "/health" and request.headers.get("x-api-key") != config.api_key:
                return JSONResponse({"error": "invalid api key"}, status_code=401)
            return await call_next(request)

    @app.get("/health")
    def health() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        if body.problem_id not in engine.problems:
            return JSONResponse(
                {"error": f"unknown problem {body.problem_id!r}"}, status_code=404
            )
        try:
            state = engine.start(body.problem_id)
        except LLMError as exc:
            return JSONResponse({"error": f"backend failure: {exc}"}, status_code=502)
        last = state.history.utterances[-1]
        return {
            "session_id": state.session_id,
            "teacher_message": last.text,
            "phase": state.phase.value,
        }

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: PostMessageBody):
        if not body.text.strip():
            return JSONResponse({"error": "text must be non-empty"}, status_code=400)
        try:
            state = engine.advance(session_id, body.text)
        except UnknownSessionError:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        except SessionNotActive:
            return JSONResponse({"error": "session is not active"}, status_code=409)
        except LLMError as exc:
            return JSONResponse({"error": f"backend failure: {exc}"}, status_code=502)
        last = state.history.utterances[-1]
        return {
            "teacher_message": last.text,
            "phase": state.phase.value,
            "status": state.status.value,
        }

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            state = engine.get(session_id)
        except UnknownSessionError:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        return _transcript(state)

    @app.get("/problems")
    def list_problems(
        knowledge_point: str | None = None,
        difficulty: str | None = None,
        page: str = "1",
        page_size: str = "20",
    ):
        try:
            page_num = int(page)
            size = int(page_size)
            level = int(difficulty) if difficulty is not None else None
            if page_num < 1 or size < 1:
                raise ValueError
        except ValueError:
            return JSONResponse({"error": "malformed filters"}, status_code=400)

        items = [
            p
            for p in engine.problems.values()
            if (knowledge_point is None or knowledge_point in p.knowledge_points)
            and (level is None or p.difficulty == level)
        ]
        items.sort(key=lambda p: p.id)
        start = (page_num - 1) * size
        return {
            "items": [problem_summary(p) for p in items[start : start + size]],
            "page": page_num,
            "page_size": size,
            "total": len(items),
        }

    return app
