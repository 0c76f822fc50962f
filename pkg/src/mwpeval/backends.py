"""Model backends: an HTTP chat-completions client and a scripted replay.

The HTTP backend speaks the common chat-completions wire format: POST
{endpoint}/chat/completions with a JSON body of model, messages,
temperature and max_tokens, reading the reply from the first choice's
message content. Credentials come only from the environment variable
named in the model spec: they never appear in config files or logs.

The scripted backend replays fixture responses keyed by prompt content
hash or by "<triplet_id>|<task>|<dop>". An unmapped prompt raises, so a
fixture gap fails loudly instead of polluting results.
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol

import requests

from .errors import BackendError, ConfigurationError, DataError, ScriptedLookupError
from .prompting import GenerationParams, RenderedPrompt

SCRIPTED_PREFIX = "scripted:"


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff with full jitter for retryable failures."""

    max_attempts: int = 5
    base_delay: float = 1.0
    multiplier: float = 2.0
    max_delay: float = 60.0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ConfigurationError(f"max_attempts must be >= 1, got {self.max_attempts}")
        if self.base_delay < 0 or self.max_delay < 0 or self.multiplier < 1:
            raise ConfigurationError("retry delays must be >= 0 and multiplier >= 1")

    def delay_before(self, attempt: int) -> float:
        """Upper jitter bound before retry number `attempt` (2-based)."""
        return min(self.base_delay * self.multiplier ** (attempt - 2), self.max_delay)

    def to_dict(self) -> dict[str, float | int]:
        return {
            "max_attempts": self.max_attempts,
            "base_delay": self.base_delay,
            "multiplier": self.multiplier,
            "max_delay": self.max_delay,
        }


@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to reach one model."""

    name: str
    endpoint: str
    auth_env: str | None = None
    params: GenerationParams = GenerationParams()
    timeout: float = 120.0
    retry: RetryPolicy = RetryPolicy()
    requests_per_second: float = 2.0

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise ConfigurationError("model name must be non-empty")
        if not self.endpoint.strip():
            raise ConfigurationError("model endpoint must be non-empty")
        if self.timeout <= 0:
            raise ConfigurationError(f"timeout must be > 0, got {self.timeout}")
        if self.requests_per_second <= 0:
            raise ConfigurationError(
                f"requests_per_second must be > 0, got {self.requests_per_second}"
            )

    @property
    def scripted_path(self) -> Path | None:
        if self.endpoint.startswith(SCRIPTED_PREFIX):
            return Path(self.endpoint[len(SCRIPTED_PREFIX):])
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "endpoint": self.endpoint,
            "auth_env": self.auth_env,
            "params": self.params.to_dict(),
            "timeout": self.timeout,
            "retry": self.retry.to_dict(),
            "requests_per_second": self.requests_per_second,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "ModelSpec":
        if not isinstance(payload, dict):
            raise ConfigurationError("model config must be a JSON object")
        known = {
            "name",
            "endpoint",
            "auth_env",
            "params",
            "timeout",
            "retry",
            "requests_per_second",
        }
        unknown = set(payload) - known
        if unknown:
            raise ConfigurationError(
                f"unknown model config keys: {sorted(unknown)}; known: {sorted(known)}"
            )
        if "name" not in payload or "endpoint" not in payload:
            raise ConfigurationError("model config needs at least name and endpoint")
        try:
            params = GenerationParams(**payload.get("params", {}))
            retry = RetryPolicy(**payload.get("retry", {}))
        except TypeError as exc:
            raise ConfigurationError(f"bad model config: {exc}") from exc
        return cls(
            name=payload["name"],
            endpoint=payload["endpoint"],
            auth_env=payload.get("auth_env"),
            params=params,
            timeout=payload.get("timeout", 120.0),
            retry=retry,
            requests_per_second=payload.get("requests_per_second", 2.0),
        )


@dataclass(frozen=True)
class CompletionResult:
    text: str
    latency_ms: float
    attempts: int
    usage: dict[str, Any] | None = None


class Backend(Protocol):
    def complete(self, prompt: RenderedPrompt) -> CompletionResult: ...


class RateLimiter:
    """Spaces acquisitions at least 1/rate seconds apart, across threads."""

    def __init__(
        self,
        rate_per_second: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if rate_per_second <= 0:
            raise ConfigurationError(f"rate must be > 0, got {rate_per_second}")
        self._interval = 1.0 / rate_per_second
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_free = float("-inf")

    def acquire(self) -> float:
        """Block until a slot is free; returns the slot time."""
        with self._lock:
            now = self._clock()
            slot = max(now, self._next_free)
            self._next_free = slot + self._interval
        if slot > now:
            self._sleep(slot - now)
        return slot


def scripted_key(triplet_id: str, task: str, dop: str | None) -> str:
    return f"{triplet_id}|{task}|{dop or '-'}"


class ScriptedBackend:
    """Deterministic replay from a JSONL fixture of {key, response}."""

    def __init__(self, path: str | Path) -> None:
        path = Path(path)
        if not path.exists():
            raise DataError(f"scripted response file not found: {path}")
        self._responses: dict[str, str] = {}
        with path.open("r", encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    payload = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(
                        f"{path} line {lineno}: invalid JSON: {exc}"
                    ) from exc
                if (
                    not isinstance(payload, dict)
                    or not isinstance(payload.get("key"), str)
                    or not isinstance(payload.get("response"), str)
                ):
                    raise DataError(
                        f"{path} line {lineno}: expected an object with string "
                        "fields 'key' and 'response'"
                    )
                if payload["key"] in self._responses:
                    raise DataError(f"{path} line {lineno}: duplicate key {payload['key']!r}")
                self._responses[payload["key"]] = payload["response"]
        self._path = path
        self._lock = threading.Lock()
        self.calls = 0

    def complete(self, prompt: RenderedPrompt) -> CompletionResult:
        with self._lock:
            self.calls += 1
        composite = scripted_key(
            prompt.triplet_id,
            prompt.mode.task.value,
            prompt.mode.dop.value if prompt.mode.dop else None,
        )
        for key in (prompt.content_hash, composite):
            if key in self._responses:
                return CompletionResult(
                    text=self._responses[key], latency_ms=0.0, attempts=1
                )
        raise ScriptedLookupError(
            f"no scripted response in {self._path} for triplet "
            f"{prompt.triplet_id}; tried content hash {prompt.content_hash} "
            f"and key {composite!r}"
        )


class HttpChatBackend:
    """Chat-completions client with retry, jitter and rate limiting.

    Retries 429, 5xx and transport failures with exponential backoff and
    full jitter; any other status is treated as permanent. Jitter only
    shifts timing, never content.
    """

    def __init__(
        self,
        spec: ModelSpec,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
        limiter: RateLimiter | None = None,
    ) -> None:
        self._spec = spec
        self._headers = {"Content-Type": "application/json"}
        if spec.auth_env:
            secret = os.environ.get(spec.auth_env, "")
            if not secret:
                raise ConfigurationError(
                    f"environment variable {spec.auth_env} is not set; it must "
                    f"hold the credential for {spec.name}"
                )
            self._headers["Authorization"] = f"Bearer {secret}"
        self._session = session or requests.Session()
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._limiter = limiter or RateLimiter(spec.requests_per_second)
        self._url = spec.endpoint.rstrip("/") + "/chat/completions"

    def complete(self, prompt: RenderedPrompt) -> CompletionResult:
        payload = {
            "model": self._spec.name,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": self._spec.params.temperature,
            "max_tokens": self._spec.params.max_tokens,
        }
        started = time.monotonic()
        last_failure = "no attempt made"
        policy = self._spec.retry
        for attempt in range(1, policy.max_attempts + 1):
            if attempt > 1:
                self._sleep(self._rng.uniform(0.0, policy.delay_before(attempt)))
            self._limiter.acquire()
            try:
                response = self._session.post(
                    self._url,
                    json=payload,
                    headers=self._headers,
                    timeout=self._spec.timeout,
                )
            except requests.RequestException as exc:
                last_failure = f"transport failure: {exc.__class__.__name__}: {exc}"
                continue
            if response.status_code == 200:
                return self._parse(response, attempt, started)
            if response.status_code == 429 or response.status_code >= 500:
                last_failure = f"HTTP {response.status_code}"
                continue
            raise BackendError(
                f"{self._spec.name}: permanent HTTP {response.status_code}: "
                f"{response.text[:200]}"
            )
        raise BackendError(
            f"{self._spec.name}: giving up after {policy.max_attempts} attempts; "
            f"last failure: {last_failure}"
        )

    def _parse(
        self, response: requests.Response, attempts: int, started: float
    ) -> CompletionResult:
        try:
            data = response.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise BackendError(
                f"{self._spec.name}: malformed completion response "
                f"({exc.__class__.__name__}: {exc}); body starts "
                f"{response.text[:200]!r}"
            ) from exc
        if not isinstance(text, str):
            raise BackendError(
                f"{self._spec.name}: malformed completion response: message "
                "content is not a string"
            )
        return CompletionResult(
            text=text,
            latency_ms=(time.monotonic() - started) * 1000.0,
            attempts=attempts,
            usage=data.get("usage") if isinstance(data.get("usage"), dict) else None,
        )


def create_backend(spec: ModelSpec) -> Backend:
    """Scripted backend for scripted: endpoints, HTTP otherwise."""
    scripted = spec.scripted_path
    if scripted is not None:
        return ScriptedBackend(scripted)
    return HttpChatBackend(spec)
