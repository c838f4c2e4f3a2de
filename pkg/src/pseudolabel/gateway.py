"""Client for OpenAI-compatible chat-completion endpoints."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import httpx

from .errors import BudgetError, PipelineError, ProtocolError, TransportError

log = logging.getLogger(__name__)

DEFAULT_MAX_NEW_TOKENS = 1024
DEFAULT_TIMEOUT = 120.0
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF = 0.5

FINISH_STOP = "stop"
FINISH_LENGTH = "length"
FINISH_ERROR = "error"

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


@dataclass(frozen=True)
class DecodingConfig:
    """Decoding settings; the defaults are greedy with a 1024-token cap."""

    model_name: str = "default"
    endpoint_url: str = "http://127.0.0.1:8000"
    temperature: float = 0.0
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS

    def __post_init__(self):
        if not self.temperature >= 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if int(self.max_new_tokens) < 1:
            raise ValueError(f"max_new_tokens must be positive, got {self.max_new_tokens}")

    @property
    def greedy(self) -> bool:
        return self.temperature == 0

    @property
    def url(self) -> str:
        base = self.endpoint_url.rstrip("/")
        if base.endswith("/chat/completions"):
            return base
        if base.endswith("/v1"):
            return base + "/chat/completions"
        return base + "/v1/chat/completions"


@dataclass
class CompletionResult:
    text: str
    finish_reason: str
    latency_ms: int
    error: Optional[Exception] = None

    @property
    def ok(self) -> bool:
        return self.finish_reason != FINISH_ERROR


class LLMClient:
    """Thread-safe chat-completion client with retry on transport failures.

    ``retries`` is the number of extra attempts after the first; the wait
    before retry ``i`` (0-based) is ``backoff * 2**i`` seconds.
    """

    def __init__(
        self,
        retries: int = DEFAULT_RETRIES,
        backoff: float = DEFAULT_BACKOFF,
        timeout: float = DEFAULT_TIMEOUT,
        api_key: Optional[str] = None,
        api_key_env: Optional[str] = "OPENAI_API_KEY",
        transport: Optional[httpx.BaseTransport] = None,
    ):
        if retries < 0:
            raise ValueError("retries must be >= 0")
        self.retries = retries
        self.backoff = backoff
        if api_key is None and api_key_env:
            api_key = os.environ.get(api_key_env) or None
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def complete(self, prompt: str, config: DecodingConfig) -> CompletionResult:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        payload = {
            "model": config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": config.temperature,
            "max_tokens": int(config.max_new_tokens),
        }
        start = time.monotonic()
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                delay = self.backoff * 2 ** (attempt - 1)
                log.warning(
                    "retry %d/%d for %s after %s", attempt, self.retries, config.url, last_error
                )
                if delay > 0:
                    time.sleep(delay)
            try:
                response = self._http.post(config.url, json=payload)
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if response.status_code in _RETRYABLE_STATUS:
                last_error = TransportError(f"HTTP {response.status_code} from {config.url}")
                continue
            if response.status_code >= 400:
                raise TransportError(
                    f"HTTP {response.status_code} from {config.url}: {response.text[:200]}"
                )
            latency = int(round((time.monotonic() - start) * 1000))
            return _parse_response(response, latency)
        raise TransportError(
            f"{config.url} failed after {self.retries + 1} attempts: {last_error}"
        )

    def batch_complete(
        self, prompts: Sequence[str], config: DecodingConfig, parallelism: int = 1
    ) -> list[CompletionResult]:
        """Complete every prompt; failures are returned in-slot with finish_reason 'error'."""
        if parallelism < 1:
            raise ValueError("parallelism must be >= 1")

        def one(prompt):
            start = time.monotonic()
            try:
                return self.complete(prompt, config)
            except (PipelineError, ValueError) as exc:
                partial = exc.result.text if isinstance(exc, BudgetError) and exc.result else ""
                ms = int(round((time.monotonic() - start) * 1000))
                return CompletionResult(partial, FINISH_ERROR, ms, error=exc)

        if parallelism == 1:
            return [one(p) for p in prompts]
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(one, prompts))


def _parse_response(response: httpx.Response, latency_ms: int) -> CompletionResult:
    try:
        body = response.json()
        choice = body["choices"][0]
        content = choice["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"malformed completion body: {response.text[:200]!r}") from exc
    if not isinstance(content, str):
        raise ProtocolError(f"completion content is not a string: {content!r}")
    reason = choice.get("finish_reason") or FINISH_STOP
    if reason == FINISH_LENGTH:
        result = CompletionResult(content, FINISH_LENGTH, latency_ms)
        raise BudgetError("completion hit the max_new_tokens limit", result=result)
    if not content:
        raise ProtocolError("empty completion")
    return CompletionResult(content, FINISH_STOP, latency_ms)
