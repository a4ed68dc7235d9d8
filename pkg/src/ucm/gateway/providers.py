"""Completion providers: live HTTP, replay-from-fixtures, recording, scripted.

The live provider speaks the common chat-completions JSON shape.  Replay keys
fixtures by a content hash of (model_name, temperature, messages) so CI runs
deterministically without a model.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Protocol

import requests

E_TRANSPORT = "E-TRANSPORT"
E_HTTP = "E-HTTP"
E_TIMEOUT = "E-TIMEOUT"
E_NO_FIXTURE = "E-NO-FIXTURE"
E_SCRIPT_EXHAUSTED = "E-SCRIPT-EXHAUSTED"

DEFAULT_TIMEOUT_SECONDS = 120.0
DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_BACKOFF_BASE_SECONDS = 0.5

ENV_ENDPOINT = "UCM_LLM_ENDPOINT"
ENV_MODEL = "UCM_LLM_MODEL"
ENV_API_KEY = "UCM_LLM_API_KEY"


class GatewayError(Exception):
    """A completion failure with a stable code."""

    def __init__(self, code: str, message: str):
        self.code = code
        self.message = message
        super().__init__(f"{code}: {message}")


class TransportError(GatewayError):
    def __init__(self, message: str):
        super().__init__(E_TRANSPORT, message)


class HttpError(GatewayError):
    def __init__(self, status: int, message: str = ""):
        self.status = status
        super().__init__(E_HTTP, message or f"provider returned HTTP {status}")


class GatewayTimeout(GatewayError):
    def __init__(self, message: str):
        super().__init__(E_TIMEOUT, message)


class NoFixtureError(GatewayError):
    def __init__(self, request_hash: str):
        self.request_hash = request_hash
        super().__init__(E_NO_FIXTURE, f"no replay fixture for request {request_hash}")


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.2
    max_tokens: int = 2048
    model_name: str = "default"

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "messages", tuple((role, content) for role, content in self.messages)
        )
        if not self.messages:
            raise ValueError("a completion request needs at least one message")
        if self.messages[0][0] != "system":
            raise ValueError("the first message must have role 'system'")
        for role, _ in self.messages:
            if role not in ("system", "user"):
                raise ValueError(f"unsupported message role {role!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass
class CompletionResponse:
    content: str
    provider_meta: dict[str, str] = field(default_factory=dict)


def request_hash(request: CompletionRequest) -> str:
    """Stable fixture key: sha256 over model name, temperature, and messages."""
    payload = json.dumps(
        {
            "model_name": request.model_name,
            "temperature": request.temperature,
            "messages": [[role, content] for role, content in request.messages],
        },
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Provider(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


class LiveProvider:
    """HTTP chat-completions client with bounded exponential-backoff retries.

    Safe to share across threads; each call uses an independent HTTP request.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        *,
        timeout: float = DEFAULT_TIMEOUT_SECONDS,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff_base: float = DEFAULT_BACKOFF_BASE_SECONDS,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._sleep = sleep

    @classmethod
    def from_env(cls, **kwargs: Any) -> "LiveProvider":
        endpoint = os.environ.get(ENV_ENDPOINT)
        if not endpoint:
            raise TransportError(f"{ENV_ENDPOINT} is not configured")
        return cls(endpoint, api_key=os.environ.get(ENV_API_KEY), **kwargs)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        url = f"{self.endpoint}/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": request.model_name,
            "messages": [
                {"role": role, "content": content} for role, content in request.messages
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        last_error: GatewayError | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(self.backoff_base * (2 ** (attempt - 1)))
            try:
                response = requests.post(url, json=body, headers=headers, timeout=self.timeout)
            except requests.Timeout:
                last_error = GatewayTimeout(f"no response within {self.timeout}s")
                continue
            except requests.RequestException as exc:
                last_error = TransportError(str(exc))
                continue
            if response.status_code >= 500 or response.status_code == 429:
                last_error = HttpError(response.status_code)
                continue
            if response.status_code >= 400:
                raise HttpError(response.status_code)
            try:
                data = response.json()
                content = data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"malformed provider response: {exc}") from exc
            meta = {
                key: str(data[key]) for key in ("id", "model") if isinstance(data.get(key), str)
            }
            return CompletionResponse(content=content, provider_meta=meta)
        assert last_error is not None
        raise last_error


class ReplayProvider:
    """Returns recorded responses from one-file-per-hash fixtures; read-only."""

    def __init__(self, fixtures_dir: str | Path):
        self.fixtures_dir = Path(fixtures_dir)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        key = request_hash(request)
        path = self.fixtures_dir / f"{key}.json"
        if not path.exists():
            raise NoFixtureError(key)
        data = json.loads(path.read_text("utf-8"))
        return CompletionResponse(
            content=data["content"], provider_meta=dict(data.get("provider_meta", {}))
        )


class RecordingProvider:
    """Wraps another provider and persists each response as a replay fixture."""

    def __init__(self, inner: Provider, fixtures_dir: str | Path):
        self.inner = inner
        self.fixtures_dir = Path(fixtures_dir)
        self.fixtures_dir.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        response = self.inner.complete(request)
        key = request_hash(request)
        record = {
            "request": {
                "model_name": request.model_name,
                "temperature": request.temperature,
                "messages": [[role, content] for role, content in request.messages],
            },
            "content": response.content,
            "provider_meta": response.provider_meta,
        }
        path = self.fixtures_dir / f"{key}.json"
        tmp = path.with_suffix(".json.tmp")
        with self._write_lock:
            tmp.write_text(json.dumps(record, indent=2, ensure_ascii=False) + "\n", "utf-8")
            os.replace(tmp, path)
        return response


class ScriptedProvider:
    """Test double: hands out queued responses in order and logs requests."""

    def __init__(self, responses: Iterable[str | CompletionResponse] = ()):
        self._queue: deque[CompletionResponse] = deque(
            r if isinstance(r, CompletionResponse) else CompletionResponse(content=r)
            for r in responses
        )
        self.requests: list[CompletionRequest] = []

    def push(self, response: str | CompletionResponse) -> None:
        self._queue.append(
            response
            if isinstance(response, CompletionResponse)
            else CompletionResponse(content=response)
        )

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        self.requests.append(request)
        if not self._queue:
            raise GatewayError(E_SCRIPT_EXHAUSTED, "scripted provider has no response queued")
        return self._queue.popleft()
