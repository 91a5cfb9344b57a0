"""Chat-completion client: HTTP and mock backends, retries, response cache."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import httpx

from .prompts import PromptBundle, render_answer
from .tasks import TaskInstance

log = logging.getLogger(__name__)


class GatewayError(RuntimeError):
    def __init__(self, message: str, attempts: Sequence[str] = ()):
        super().__init__(message)
        self.attempts = list(attempts)


class AuthError(GatewayError):
    """Missing or rejected credential. Never retried."""


class MalformedResponseError(GatewayError):
    pass


class TransientError(GatewayError):
    """Timeout, rate limit or server-side failure; worth retrying."""


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 1024
    instance_id: str = ""

    def __post_init__(self) -> None:
        roles = [r for r, _ in self.messages]
        if roles.count("system") != 1 or "user" not in roles:
            raise ValueError("a request needs exactly one system message and at least one user message")
        if any(r not in ("system", "user") for r in roles):
            raise ValueError(f"unsupported roles in {roles}")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    @classmethod
    def from_prompt(cls, bundle: PromptBundle, model: str, temperature: float = 0.0, max_tokens: int = 1024) -> "ChatRequest":
        return cls(model, (("system", bundle.system_text), ("user", bundle.user_text)), temperature, max_tokens, bundle.instance_id)

    def wire(self) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }

    @property
    def key(self) -> str:
        """Cache key over model, decoding parameters and the full message list."""
        blob = json.dumps(self.wire(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_json(self) -> dict:
        return {**self.wire(), "instance_id": self.instance_id}

    @classmethod
    def from_json(cls, obj: dict) -> "ChatRequest":
        msgs = tuple((m["role"], m["content"]) for m in obj["messages"])
        return cls(obj["model"], msgs, obj["temperature"], obj["max_tokens"], obj.get("instance_id", ""))


@dataclass(frozen=True)
class ChatResponse:
    text: str
    backend: str
    latency_ms: float = 0.0
    token_usage: dict | None = None
    cached: bool = False

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ChatResponse":
        return cls(obj["text"], obj["backend"], obj.get("latency_ms", 0.0), obj.get("token_usage"), obj.get("cached", False))


# --------------------------------------------------------------------------
# Backends
# --------------------------------------------------------------------------

class MockOracleBackend:
    """Answers every request with the referenced instance's ground truth."""

    name = "mock_oracle"

    def __init__(self, instances: Mapping[str, TaskInstance] | Sequence[TaskInstance]):
        if not isinstance(instances, Mapping):
            instances = {inst.id: inst for inst in instances}
        self.instances = dict(instances)

    def complete(self, request: ChatRequest) -> ChatResponse:
        inst = self.instances.get(request.instance_id)
        if inst is None:
            raise GatewayError(f"mock_oracle has no instance {request.instance_id!r}")
        return ChatResponse(f"<<ANSWER>> {render_answer(inst.truth)}", self.name)


class MockFixedBackend:
    """Returns the same canned completion for every request."""

    name = "mock_fixed"

    def __init__(self, text: str):
        self.text = text

    def complete(self, request: ChatRequest) -> ChatResponse:
        return ChatResponse(self.text, self.name)


class HttpChatBackend:
    """OpenAI-style ``/chat/completions`` endpoint.

    The API key is read from the environment variable ``credential_env`` at
    call time and only ever placed in the Authorization header.
    """

    name = "http_chat"

    def __init__(
        self,
        endpoint: str,
        credential_env: str,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.credential_env = credential_env
        self.timeout = timeout
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _credential(self) -> str:
        key = os.environ.get(self.credential_env)
        if not key:
            raise AuthError(f"credential variable {self.credential_env} is not set")
        return key

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = self._credential()
        start = time.perf_counter()
        try:
            resp = self._client.post(self.endpoint, json=request.wire(), headers={"Authorization": f"Bearer {key}"})
        except httpx.TimeoutException as exc:
            raise TransientError(f"timeout: {exc}") from None
        except httpx.TransportError as exc:
            raise TransientError(f"transport error: {exc}") from None
        latency = (time.perf_counter() - start) * 1000.0
        if resp.status_code in (401, 403):
            raise AuthError(f"endpoint rejected credential (HTTP {resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise GatewayError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"unexpected response body: {exc!r}") from None
        if not isinstance(text, str):
            raise MalformedResponseError("completion content is not a string")
        usage = body.get("usage")
        if isinstance(usage, dict):
            usage = {k: usage[k] for k in ("prompt_tokens", "completion_tokens") if k in usage}
        return ChatResponse(text, self.name, latency, usage or None)


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    initial_delay: float = 1.0
    factor: float = 2.0
    jitter: float = 0.1
    sleep: Callable[[float], None] = field(default=time.sleep, compare=False, repr=False)

    def delay(self, attempt: int) -> float:
        base = self.initial_delay * self.factor ** (attempt - 1)
        return base * (1.0 + random.uniform(-self.jitter, self.jitter))


def send(request: ChatRequest, backend, policy: RetryPolicy | None = None) -> ChatResponse:
    """Call ``backend`` and retry transient failures with exponential backoff."""
    policy = policy or RetryPolicy()
    history: list[str] = []
    for attempt in range(1, policy.max_attempts + 1):
        try:
            return backend.complete(request)
        except TransientError as exc:
            history.append(f"attempt {attempt}: {exc}")
            if attempt == policy.max_attempts:
                break
            wait = policy.delay(attempt)
            log.warning("transient failure for %s (%s); retrying in %.1fs", request.instance_id, exc, wait)
            policy.sleep(wait)
        except GatewayError as exc:
            exc.attempts = history + [f"attempt {attempt}: {exc}"]
            raise
    raise GatewayError(f"gave up after {policy.max_attempts} attempts", history)


# --------------------------------------------------------------------------
# Cache
# --------------------------------------------------------------------------

def _checksum(key: str, request: dict, response: dict) -> str:
    blob = json.dumps({"key": key, "request": request, "response": response}, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode()).hexdigest()


class ResponseCache:
    """Append-only JSONL store keyed by :attr:`ChatRequest.key`.

    Records failing their checksum (or not parsing) are skipped with a
    warning, so the request gets recomputed and re-appended.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._entries: dict[str, dict] = {}
        self.skipped = 0
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    ok = rec["checksum"] == _checksum(rec["key"], rec["request"], rec["response"])
                    ok = ok and ChatRequest.from_json(rec["request"]).key == rec["key"]
                except (ValueError, KeyError, TypeError):
                    ok = False
                if not ok:
                    self.skipped += 1
                    log.warning("skipping corrupt cache record at %s:%d", self.path, lineno)
                    continue
                self._entries[rec["key"]] = rec

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def get(self, request: ChatRequest) -> ChatResponse | None:
        rec = self._entries.get(request.key)
        if rec is None:
            return None
        return ChatResponse.from_json({**rec["response"], "cached": True})

    def put(self, request: ChatRequest, response: ChatResponse) -> None:
        req = request.to_json()
        resp = {**response.to_json(), "cached": False}
        rec = {
            "key": request.key,
            "request": req,
            "response": resp,
            "checksum": _checksum(request.key, req, resp),
            "timestamp": time.time(),
        }
        with self._lock:
            self._entries[request.key] = rec
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(rec, ensure_ascii=False) + "\n")

    def records(self) -> list[dict]:
        return list(self._entries.values())


@dataclass
class DispatchStats:
    hits: int = 0
    misses: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def bump(self, hit: bool) -> None:
        with self._lock:
            if hit:
                self.hits += 1
            else:
                self.misses += 1


def cached_send(
    request: ChatRequest,
    backend,
    cache: ResponseCache,
    policy: RetryPolicy | None = None,
    stats: DispatchStats | None = None,
) -> ChatResponse:
    hit = cache.get(request)
    if stats is not None:
        stats.bump(hit is not None)
    if hit is not None:
        return hit
    response = send(request, backend, policy)
    cache.put(request, response)
    return response


def dispatch(
    requests: Sequence[ChatRequest],
    backend,
    cache: ResponseCache,
    policy: RetryPolicy | None = None,
    max_in_flight: int = 4,
) -> tuple[list[ChatResponse], DispatchStats]:
    """Send all requests with at most ``max_in_flight`` concurrent calls; results keep input order."""
    if max_in_flight < 1:
        raise ValueError("max_in_flight must be positive")
    stats = DispatchStats()
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        futures = [pool.submit(cached_send, r, backend, cache, policy, stats) for r in requests]
        return [f.result() for f in futures], stats


def make_backend(profile: Mapping, instances: Sequence[TaskInstance] = ()):
    """Build a backend from a config profile ``{"kind": ..., ...}``."""
    kind = profile.get("kind")
    if kind == "mock_oracle":
        return MockOracleBackend(instances)
    if kind == "mock_fixed":
        return MockFixedBackend(profile.get("text", ""))
    if kind == "http_chat":
        if "endpoint" not in profile or "credential_env" not in profile:
            raise ValueError("http_chat profile needs 'endpoint' and 'credential_env'")
        return HttpChatBackend(profile["endpoint"], profile["credential_env"], float(profile.get("timeout", 60.0)))
    raise ValueError(f"unknown backend kind {kind!r}")
