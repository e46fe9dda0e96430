"""Chat-completion gateway with an HTTP backend and a deterministic mock.

HTTP wire format (POST ``{base_url}/chat/completions``)::

    request  {"model", "messages": [{"role", "content"}], "temperature", "n", "max_tokens"?}
    response {"choices": [{"message": {"content": ...}}, ...]}
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence

import httpx

from .errors import BackendError, ConfigError

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
DEFAULT_TEMPERATURE = 0.8
DEFAULT_RETRIES = 2
DEFAULT_TIMEOUT = 30.0
DEFAULT_MAX_IN_FLIGHT = 4


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not self.content and self.role != "assistant":
            raise ValueError(f"{self.role} message must have content")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float = DEFAULT_TEMPERATURE
    n_samples: int = 1
    model: str = ""
    max_output_tokens: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("request needs at least one message")
        if any(m.role == "system" for m in self.messages[1:]):
            raise ValueError("a system message may only come first")
        if not 0 <= self.temperature <= 2:
            raise ValueError("temperature must be in [0, 2]")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.max_output_tokens is not None and self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class CompletionResponse:
    texts: tuple[str, ...]
    backend_id: str
    latency_ms: float = 0.0
    attempts: int = 1
    backoff_s: tuple[float, ...] = ()

    @property
    def text(self) -> str:
        return self.texts[0]


class Backend(Protocol):
    backend_id: str

    def complete(self, req: CompletionRequest) -> CompletionResponse: ...


def complete(backend: Backend, req: CompletionRequest) -> CompletionResponse:
    return backend.complete(req)


def fingerprint(messages: Sequence[ChatMessage]) -> str:
    """Stable hash of a conversation: roles and contents, in order."""
    h = hashlib.sha256()
    for m in messages:
        h.update(m.role.encode("utf-8"))
        h.update(b"\x1f")
        h.update(m.content.encode("utf-8"))
        h.update(b"\x1e")
    return h.hexdigest()


FALLBACKS = ("echo-last-user", "fixed-string", "fail")


@dataclass(frozen=True)
class MockBackend:
    """Replies from a fingerprint -> text table; misses go to ``fallback``."""

    script: Mapping[str, str] = field(default_factory=dict)
    fallback: str = "echo-last-user"
    fixed: str = ""
    backend_id: str = "mock"

    def __post_init__(self) -> None:
        if self.fallback not in FALLBACKS:
            raise ConfigError(f"unknown mock fallback {self.fallback!r}")

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        key = fingerprint(req.messages)
        if key in self.script:
            text = self.script[key]
        elif self.fallback == "echo-last-user":
            text = next((m.content for m in reversed(req.messages) if m.role == "user"), "")
        elif self.fallback == "fixed-string":
            text = self.fixed
        else:
            raise BackendError("protocol", f"no scripted reply for prompt {key[:12]}")
        return CompletionResponse((text,) * req.n_samples, self.backend_id)


def make_mock(
    script: Mapping[str, str] | None = None, fallback: str = "echo-last-user", fixed: str = ""
) -> MockBackend:
    return MockBackend(dict(script or {}), fallback, fixed)


def load_mock_script(path: str | os.PathLike) -> dict[str, str]:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict) or not all(isinstance(v, str) for v in data.values()):
        raise ConfigError(f"{path}: mock script must be a JSON object of fingerprint -> reply")
    return data


class HttpBackend:
    """Chat-completions over HTTP with bounded retries and an in-flight cap."""

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        model: str = "",
        timeout: float = DEFAULT_TIMEOUT,
        retries: int = DEFAULT_RETRIES,
        backoff: float = 1.0,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not base_url:
            raise ConfigError("LLM base URL is not set")
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.retries = retries
        self.backoff = backoff
        self.backend_id = f"http:{self.base_url}"
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    @classmethod
    def from_env(cls, **kwargs) -> "HttpBackend":
        base_url = os.environ.get("LLM_BASE_URL")
        api_key = os.environ.get("LLM_API_KEY")
        if not base_url:
            raise ConfigError("LLM_BASE_URL is not set")
        if not api_key:
            raise ConfigError("LLM_API_KEY is not set")
        kwargs.setdefault("model", os.environ.get("LLM_MODEL", ""))
        return cls(base_url, api_key, **kwargs)

    def close(self) -> None:
        self._client.close()

    def payload(self, req: CompletionRequest) -> dict:
        body = {
            "model": req.model or self.model,
            "messages": [m.to_dict() for m in req.messages],
            "temperature": req.temperature,
            "n": req.n_samples,
        }
        if req.max_output_tokens is not None:
            body["max_tokens"] = req.max_output_tokens
        return body

    def _post_once(self, body: dict, n: int) -> tuple[str, ...]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(f"{self.base_url}/chat/completions", json=body, headers=headers)
        except httpx.TimeoutException as exc:
            raise BackendError("timeout", str(exc)) from exc
        except httpx.TransportError as exc:
            raise BackendError("transport", str(exc)) from exc
        if resp.status_code == 429:
            raise BackendError("rate-limited", resp.text[:200], resp.status_code)
        if resp.status_code >= 500:
            raise BackendError("transport", f"HTTP {resp.status_code}", resp.status_code)
        if resp.status_code >= 400:
            raise BackendError("protocol", f"HTTP {resp.status_code}: {resp.text[:200]}", resp.status_code)
        try:
            texts = tuple(c["message"]["content"] for c in resp.json()["choices"])
        except (ValueError, KeyError, TypeError) as exc:
            raise BackendError("protocol", f"malformed response body: {exc}") from exc
        if len(texts) != n or not all(isinstance(t, str) for t in texts):
            raise BackendError("protocol", f"expected {n} text choice(s), got {len(texts)}")
        return texts

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        body = self.payload(req)
        waits: list[float] = []
        started = time.perf_counter()
        with self._slots:
            attempt = 0
            while True:
                attempt += 1
                try:
                    texts = self._post_once(body, req.n_samples)
                    break
                except BackendError as exc:
                    if not exc.retryable or attempt > self.retries:
                        raise
                    wait = self.backoff * 2 ** (attempt - 1)
                    log.warning("backend %s failed (%s); retry %d in %.1fs", self.backend_id, exc, attempt, wait)
                    waits.append(wait)
                    self._sleep(wait)
        latency = (time.perf_counter() - started) * 1000
        return CompletionResponse(texts, self.backend_id, latency, attempt, tuple(waits))


def completion_fn(backend: Backend, **request_kwargs) -> Callable[[Sequence[ChatMessage]], str]:
    """Adapt a backend to the ``messages -> text`` callable the grammar summarizer takes."""

    def call(messages: Sequence[ChatMessage]) -> str:
        return backend.complete(CompletionRequest(tuple(messages), **request_kwargs)).text

    return call
