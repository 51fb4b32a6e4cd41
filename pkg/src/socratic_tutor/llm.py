"""Backend-agnostic chat completion with retries and scripted test doubles.

The wire protocol is the de-facto chat-completion JSON shape (messages array
of ``{role, content}``) so any compatible server works; tests use in-process
backends that replay scripts or echo callbacks. Auth is a bearer token read
from an environment variable, never from config files.
"""
from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Protocol, Sequence

import httpx

from .prompting import SYSTEM, ContextMessage


class LLMError(Exception):
    pass


class TransientBackendError(LLMError):
    """Retryable failure (timeouts, 5xx, rate limits, injected faults)."""


class BackendUnavailable(LLMError):
    """Raised once retries are exhausted or the backend rejects outright."""


class DeadlineExceeded(LLMError):
    pass


class MalformedResponse(LLMError):
    pass


class FinishReason(str, Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[ContextMessage, ...]
    temperature: float = 0.0
    max_new_tokens: int = 512
    model_name: str = "default"

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].role != SYSTEM:
            raise ValueError("first message must have system role")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_new_tokens <= 0:
            raise ValueError("max_new_tokens must be > 0")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: FinishReason
    latency_ms: int
    retries: int = 0


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 3
    backoff_base: float = 0.5  # seconds; doubles per retry
    deadline: float = 60.0  # total wall-clock budget in seconds


@dataclass(frozen=True)
class Fault:
    """Scripted transient failure for fault-injection tests."""

    message: str = "injected transient failure"


class Backend(Protocol):
    def send(self, request: ChatRequest) -> ChatResponse: ...


class ScriptedBackend:
    """Replays a fixed script of responses and faults, recording requests.

    Exhausting the script surfaces as MalformedResponse so a test that makes
    one call too many fails loudly instead of hanging.
    """

    def __init__(self, script: Sequence[str | Fault]):
        if not script:
            raise ValueError("script must be non-empty")
        self._script = list(script)
        self._pos = 0
        self._lock = threading.Lock()
        self.requests: list[ChatRequest] = []

    @property
    def calls(self) -> int:
        return len(self.requests)

    def send(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.requests.append(request)
            if self._pos >= len(self._script):
                raise MalformedResponse(
                    f"scripted backend exhausted after {len(self._script)} replies"
                )
            item = self._script[self._pos]
            self._pos += 1
        if isinstance(item, Fault):
            raise TransientBackendError(item.message)
        return ChatResponse(text=item, finish_reason=FinishReason.STOP, latency_ms=0)


class CallbackBackend:
    """Computes each reply from the request; used for echo-style mocks."""

    def __init__(self, fn: Callable[[ChatRequest], str]):
        self._fn = fn
        self._lock = threading.Lock()
        self.requests: list[ChatRequest] = []

    def send(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.requests.append(request)
        return ChatResponse(
            text=self._fn(request), finish_reason=FinishReason.STOP, latency_ms=0
        )


_ROLE_MAP = {"system": "system", "teacher": "assistant", "student": "user"}
_FINISH_MAP = {"stop": FinishReason.STOP, "length": FinishReason.LENGTH}


class HttpBackend:
    """POSTs chat completions to ``<base_url>/chat/completions``."""

    def __init__(
        self,
        base_url: str,
        *,
        api_key_env: str = "SOCTUTOR_API_TOKEN",
        timeout: float = 30.0,
        client: httpx.Client | None = None,
    ):
        self._url = base_url.rstrip("/") + "/chat/completions"
        self._api_key_env = api_key_env
        self._client = client or httpx.Client(timeout=timeout)

    def send(self, request: ChatRequest) -> ChatResponse:
        headers = {}
        token = os.environ.get(self._api_key_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        payload = {
            "model": request.model_name,
            "messages": [
                {"role": _ROLE_MAP[m.role], "content": m.text} for m in request.messages
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_new_tokens,
        }
        started = time.monotonic()
        try:
            resp = self._client.post(self._url, json=payload, headers=headers)
        except httpx.TransportError as exc:
            raise TransientBackendError(str(exc)) from exc
        latency_ms = int((time.monotonic() - started) * 1000)

        if resp.status_code >= 500 or resp.status_code == 429:
            raise TransientBackendError(f"backend returned {resp.status_code}")
        if resp.status_code != 200:
            raise BackendUnavailable(f"backend returned {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            choice = data["choices"][0]
            text = choice["message"]["content"]
            finish = _FINISH_MAP.get(choice.get("finish_reason", "stop"), FinishReason.STOP)
        except (ValueError, LookupError, TypeError) as exc:
            raise MalformedResponse(f"unparseable backend response: {exc}") from exc
        if not isinstance(text, str) or (finish is FinishReason.STOP and not text):
            raise MalformedResponse("backend returned empty or non-string text")
        return ChatResponse(text=text, finish_reason=finish, latency_ms=latency_ms)


@dataclass
class LLMClient:
    """Retry/timeout wrapper around a backend.

    Shareable across threads; in-flight parallelism is bounded by a
    semaphore. Each call is retried independently, and a delivered success
    is returned exactly once (no retry ever follows a stop response).
    """

    backend: Backend
    max_parallel: int = 4
    _sleep: Callable[[float], None] = field(default=time.sleep, repr=False)
    _gate: threading.BoundedSemaphore = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        self._gate = threading.BoundedSemaphore(self.max_parallel)

    def complete(self, request: ChatRequest, policy: RetryPolicy | None = None) -> ChatResponse:
        """Send ``request``, retrying transient failures with exponential backoff.

        Raises BackendUnavailable after ``policy.max_retries`` failed retries
        and DeadlineExceeded when the next backoff would overrun
        ``policy.deadline`` of total wall time.
        """
        policy = policy or RetryPolicy()
        started = time.monotonic()
        retries = 0
        while True:
            attempt_start = time.monotonic()
            try:
                with self._gate:
                    response = self.backend.send(request)
            except TransientBackendError as exc:
                retries += 1
                if retries > policy.max_retries:
                    raise BackendUnavailable(
                        f"backend failed after {policy.max_retries} retries: {exc}"
                    ) from exc
                delay = policy.backoff_base * (2 ** (retries - 1))
                if time.monotonic() - started + delay > policy.deadline:
                    raise DeadlineExceeded(
                        f"retry backoff would exceed {policy.deadline}s deadline"
                    ) from exc
                self._sleep(delay)
                continue
            latency_ms = int((time.monotonic() - attempt_start) * 1000)
            return replace(response, retries=retries, latency_ms=latency_ms)
