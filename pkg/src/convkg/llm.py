"""Chat-completion transport: an HTTP client plus deterministic test doubles."""

from __future__ import annotations

import os
import threading
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any, Protocol

import httpx

DEFAULT_TOKEN_ENV = "CONVKG_LLM_API_KEY"


class TransportError(RuntimeError):
    """The request did not produce a usable HTTP response. Retriable."""


@dataclass(frozen=True)
class LlmRequest:
    model: str
    system_prompt: str
    user_prompt: str
    temperature: float = 0.0
    # Local bookkeeping for mocks and logs (cell id, candidate names); never sent.
    metadata: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def messages(self) -> list[dict[str, str]]:
        return [
            {"role": "system", "content": self.system_prompt},
            {"role": "user", "content": self.user_prompt},
        ]

    def payload(self) -> dict[str, Any]:
        return {"model": self.model, "messages": self.messages(), "temperature": self.temperature}


@dataclass(frozen=True)
class LlmResponse:
    text: str
    usage: Mapping[str, int] | None = None


class ChatClient(Protocol):
    def complete(self, request: LlmRequest) -> LlmResponse: ...


class HttpChatClient:
    """OpenAI-style ``POST {base_url}/chat/completions`` client.

    The bearer token is read from an environment variable, never from config.
    """

    def __init__(
        self,
        base_url: str,
        token_env: str = DEFAULT_TOKEN_ENV,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.token_env = token_env
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, request: LlmRequest) -> LlmResponse:
        try:
            resp = self._client.post(self.url, json=request.payload(), headers=self._headers())
        except httpx.HTTPError as exc:
            raise TransportError(f"{type(exc).__name__}: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code} from {self.url}")
        if resp.status_code >= 400:
            raise RuntimeError(f"HTTP {resp.status_code} from {self.url}: {resp.text[:200]}")
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat-completion body: {exc}") from exc
        usage = body.get("usage")
        return LlmResponse(text, dict(usage) if isinstance(usage, dict) else None)

    def close(self) -> None:
        self._client.close()


class MockChatClient:
    """Deterministic stand-in for an LLM endpoint.

    Answers, in order of precedence: a canned reply keyed by
    ``metadata["cell_id"]``, the first evidence candidate name when
    ``echo_top_candidate`` is set, otherwise ``default``.
    """

    def __init__(
        self,
        responses: Mapping[str, str] | None = None,
        default: str = "unknown",
        echo_top_candidate: bool = False,
    ):
        self.responses = dict(responses or {})
        self.default = default
        self.echo_top_candidate = echo_top_candidate
        self._lock = threading.Lock()
        self.requests: list[LlmRequest] = []

    @property
    def call_count(self) -> int:
        return len(self.requests)

    def complete(self, request: LlmRequest) -> LlmResponse:
        with self._lock:
            self.requests.append(request)
        cell_id = request.metadata.get("cell_id")
        if cell_id in self.responses:
            return LlmResponse(self.responses[cell_id])
        names = request.metadata.get("candidate_names") or ()
        if self.echo_top_candidate and names:
            return LlmResponse(names[0])
        return LlmResponse(self.default)


class RecordingClient:
    """Wraps a client and logs each call with the caller's pipeline stage at that moment.

    Pass :meth:`mark` as the ``observer`` of :func:`convkg.annotate.annotate`;
    every recorded call then carries the last stage reached by the same cell,
    which is how "no LLM call before prompt assembly" is asserted.
    """

    def __init__(self, inner: ChatClient):
        self.inner = inner
        self._lock = threading.Lock()
        self.stage: dict[str, str] = {}
        self.events: list[tuple[str, str]] = []
        self.calls: list[tuple[str, LlmRequest]] = []

    def mark(self, cell_id: str, stage: str) -> None:
        with self._lock:
            self.stage[cell_id] = stage
            self.events.append((cell_id, stage))

    def complete(self, request: LlmRequest) -> LlmResponse:
        cell_id = request.metadata.get("cell_id", "")
        with self._lock:
            self.calls.append((self.stage.get(cell_id, "idle"), request))
            self.events.append((cell_id, "llm_call"))
        return self.inner.complete(request)
