"""Chat-completion backends: HTTP client with retries plus deterministic mocks.

The wire shape is the de-facto chat-completions JSON (model, messages,
temperature, max_tokens in; choices[0].message.content out), so the same
client can hit hosted endpoints or a local fine-tuned server. Mocks are
keyed by item id carried in the request metadata, which keeps tests and
dry runs fully deterministic.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

import requests

from .prompt import ChatMessage

__all__ = [
    "CompletionRequest",
    "CompletionOutcome",
    "BackendConfig",
    "Backend",
    "BackendError",
    "RequestError",
    "HttpBackend",
    "OracleBackend",
    "EchoBackend",
    "MalformedBackend",
    "MOCK_NAMES",
    "make_backend",
    "complete_batch",
]

MOCK_NAMES = ("oracle", "echo", "malformed")


class BackendError(RuntimeError):
    """Transient failure that survived all retries, or a broken response body."""


class RequestError(RuntimeError):
    """Non-retryable client error (4xx other than 429)."""


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[ChatMessage, ...]
    max_output_tokens: int = 256
    temperature: float = 0.0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].role != "system":
            raise ValueError("first message must have the system role")


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str = ""
    model: str = ""
    auth_env: str = "KGCORRECT_API_TOKEN"
    timeout: float = 30.0
    max_retries: int = 3
    max_in_flight: int = 4
    backoff_base: float = 0.5

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


class Backend(Protocol):
    def complete(self, request: CompletionRequest) -> str: ...


class HttpBackend:
    """POSTs chat requests with exponential backoff on 429/5xx/timeouts."""

    def __init__(
        self,
        config: BackendConfig,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if not config.endpoint:
            raise ValueError("backend endpoint is not configured")
        self.config = config
        self._session = session or requests.Session()
        self._sleep = sleep

    def complete(self, request: CompletionRequest) -> str:
        payload = {
            "model": self.config.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        headers = {}
        token = os.environ.get(self.config.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"

        last_error = "no attempt made"
        for attempt in range(self.config.max_retries + 1):
            try:
                response = self._session.post(
                    self.config.endpoint,
                    json=payload,
                    headers=headers,
                    timeout=self.config.timeout,
                )
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_error = f"transport error: {exc}"
            else:
                status = response.status_code
                if status == 200:
                    return self._extract_text(response)
                if status == 429 or status >= 500:
                    last_error = f"HTTP {status}"
                else:
                    raise RequestError(f"HTTP {status}: {response.text[:200]}")
            if attempt < self.config.max_retries:
                self._sleep(self.config.backoff_base * (2**attempt))
        raise BackendError(
            f"exhausted {self.config.max_retries} retries ({last_error})"
        )

    @staticmethod
    def _extract_text(response: requests.Response) -> str:
        try:
            body = response.json()
            return body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"unexpected response body: {exc}") from exc


def _item_id(request: CompletionRequest) -> str:
    item_id = request.metadata.get("item_id")
    if item_id is None:
        raise BackendError("mock backends need an item_id in the request metadata")
    return item_id


class OracleBackend:
    """Replays each item's gold two-line target; the perfect-model baseline."""

    def __init__(self, items: Iterable) -> None:
        self._targets = {
            item.id: f"Corrected Text: {item.gt_text}\nCorrect Option: {item.answer}"
            for item in items
        }

    def complete(self, request: CompletionRequest) -> str:
        item_id = _item_id(request)
        try:
            return self._targets[item_id]
        except KeyError:
            raise BackendError(f"oracle mock has no item {item_id!r}") from None


class EchoBackend:
    """Returns the input transcript unchanged and always answers A."""

    def __init__(self, items: Iterable) -> None:
        self._asr = {
            item.id: item.asr_text if item.asr_text is not None else item.gt_text
            for item in items
        }

    def complete(self, request: CompletionRequest) -> str:
        item_id = _item_id(request)
        try:
            return f"Corrected Text: {self._asr[item_id]}\nCorrect Option: A"
        except KeyError:
            raise BackendError(f"echo mock has no item {item_id!r}") from None


class MalformedBackend:
    """Violates the two-line protocol on purpose, to exercise the parser fallback."""

    def complete(self, request: CompletionRequest) -> str:
        return "I think the answer is B"


def make_backend(
    config: BackendConfig,
    mock: str | None = None,
    items: Iterable | None = None,
) -> Backend:
    """Select the HTTP backend or one of the built-in mocks by name."""

    if mock is None:
        return HttpBackend(config)
    if mock == "oracle":
        return OracleBackend(items or ())
    if mock == "echo":
        return EchoBackend(items or ())
    if mock == "malformed":
        return MalformedBackend()
    raise ValueError(f"unknown mock backend {mock!r}; expected one of {MOCK_NAMES}")


@dataclass(frozen=True)
class CompletionOutcome:
    """Per-slot result of a batch call; exactly one of text/error is set."""

    text: str | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def complete_batch(
    backend: Backend,
    requests_: Sequence[CompletionRequest],
    max_in_flight: int = 4,
) -> list[CompletionOutcome]:
    """Run requests with bounded concurrency, results aligned with inputs.

    Per-item failures are carried in their slot and never abort the batch.
    """

    if not requests_:
        return []
    outcomes: list[CompletionOutcome] = [CompletionOutcome()] * len(requests_)
    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        futures = [pool.submit(backend.complete, request) for request in requests_]
        for slot, future in enumerate(futures):
            try:
                outcomes[slot] = CompletionOutcome(text=future.result())
            except Exception as exc:
                outcomes[slot] = CompletionOutcome(error=f"{type(exc).__name__}: {exc}")
    return outcomes
