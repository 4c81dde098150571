"""Chat-completion backend: remote HTTP gateway or deterministic local replay.

Requests are content-addressed: ``request_key`` hashes (model, temperature,
messages) and is the lookup key for the response cache and the replay file.
Repeated same-temperature consistency routes stay distinct through an
explicit route salt mixed into the storage key, never into the request.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path


class BackendError(Exception):
    """Base class for backend failures."""


class TransportError(BackendError):
    """Network failure or timeout that persisted through all retries."""


class RateLimitedError(BackendError):
    """HTTP 429 persisted through all retries; carries the retry-after hint."""

    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class ApiError(BackendError):
    """Non-2xx response; carries status code and body."""

    def __init__(self, message: str, status: int, body: str = ""):
        super().__init__(message)
        self.status = status
        self.body = body


class ReplayMissError(BackendError):
    """The replay file has no entry for the request key."""

    def __init__(self, key: str):
        super().__init__(f"no replay entry for request key {key}")
        self.key = key


_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in _ROLES:
            raise ValueError(f"invalid message role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion call: message history plus sampling parameters."""

    messages: tuple[ChatMessage, ...]
    temperature: float
    model_name: str
    max_tokens: int = 256

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("request needs at least one message")
        if self.messages[-1].role != "user":
            raise ValueError("last message must have role 'user'")
        if not math.isfinite(self.temperature) or self.temperature < 0:
            raise ValueError(f"temperature must be finite and >= 0, got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: tuple[int, int] | None = None
    backend_id: str = ""
    cached: bool = False


@dataclass(frozen=True)
class BackendConfig:
    """Where and how completions are obtained.

    ``replay_file`` is read when ``kind == "replay"`` and appended to when
    ``record`` is set on an HTTP backend.
    """

    kind: str = "http"
    endpoint_url: str | None = None
    api_key_env: str | None = None
    request_timeout: float = 30.0
    max_retries: int = 2
    retry_backoff: tuple[float, ...] = (0.5, 1.0, 2.0)
    cache_dir: Path | None = None
    replay_file: Path | None = None
    record: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("http", "replay"):
            raise ValueError(f"invalid backend kind {self.kind!r}")
        if self.kind == "http" and not self.endpoint_url:
            raise ValueError("http backend requires endpoint_url")
        if self.kind == "replay" and not self.replay_file:
            raise ValueError("replay backend requires replay_file")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.record and not self.replay_file:
            raise ValueError("record requires replay_file")
        if self.cache_dir is not None:
            object.__setattr__(self, "cache_dir", Path(self.cache_dir))
        if self.replay_file is not None:
            object.__setattr__(self, "replay_file", Path(self.replay_file))


def request_key(request: ChatRequest) -> str:
    """Stable content hash over (model, temperature, messages)."""
    payload = json.dumps(
        {
            "model": request.model_name,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": [[m.role, m.content] for m in request.messages],
        },
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def storage_key(request: ChatRequest, route_salt: str | None = None) -> str:
    """Cache/replay key: the request key, salted per consistency route."""
    key = request_key(request)
    if route_salt is None:
        return key
    return hashlib.sha256(f"{key}#{route_salt}".encode("utf-8")).hexdigest()


_replay_lock = threading.Lock()
_replay_indexes: dict[Path, tuple[tuple[float, int], dict[str, str]]] = {}


def _replay_index(path: Path) -> dict[str, str]:
    path = path.resolve()
    try:
        stat = path.stat()
        stamp = (stat.st_mtime, stat.st_size)
    except FileNotFoundError:
        return {}
    with _replay_lock:
        cached = _replay_indexes.get(path)
        if cached and cached[0] == stamp:
            return cached[1]
        index: dict[str, str] = {}
        with path.open(encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                index[entry["key"]] = entry["response_text"]
        _replay_indexes[path] = (stamp, index)
        return index


_record_lock = threading.Lock()


def _record_entry(path: Path, key: str, text: str) -> None:
    with _record_lock:
        if key in _replay_index(path):
            return
        with path.open("a", encoding="utf-8") as handle:
            handle.write(
                json.dumps({"key": key, "response_text": text}, ensure_ascii=True)
                + "\n"
            )
        _replay_indexes.pop(path.resolve(), None)


_cache_lock = threading.Lock()


def _cache_path(config: BackendConfig, key: str) -> Path:
    return config.cache_dir / f"{key}.json"


def _cache_read(config: BackendConfig, key: str) -> str | None:
    if config.cache_dir is None:
        return None
    path = _cache_path(config, key)
    if not path.exists():
        return None
    entry = json.loads(path.read_text(encoding="utf-8"))
    return entry["response"]["text"]


def _cache_write(config: BackendConfig, key: str, request: ChatRequest, text: str) -> None:
    if config.cache_dir is None:
        return
    config.cache_dir.mkdir(parents=True, exist_ok=True)
    entry = {
        "request": {
            "model": request.model_name,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": [[m.role, m.content] for m in request.messages],
        },
        "response": {"text": text},
        "timestamp": time.time(),
    }
    # Atomic replace keeps concurrent writers from interleaving per key.
    with _cache_lock:
        fd, tmp = tempfile.mkstemp(dir=config.cache_dir, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                json.dump(entry, handle, ensure_ascii=True)
            os.replace(tmp, _cache_path(config, key))
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)


def _default_transport(url, payload, headers, timeout):
    """POST JSON via urllib; returns (status, body_text, response_headers)."""
    req = urllib.request.Request(url, data=payload, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as response:
            return response.status, response.read().decode("utf-8"), dict(response.headers)
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read().decode("utf-8", errors="replace"), dict(exc.headers or {})
    except (urllib.error.URLError, TimeoutError, OSError) as exc:
        raise TransportError(str(exc)) from exc


def _http_complete(request, config, transport, sleep):
    payload = json.dumps(
        {
            "model": request.model_name,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        },
        ensure_ascii=True,
    ).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    if config.api_key_env:
        api_key = os.environ.get(config.api_key_env)
        if api_key is None:
            raise BackendError(
                f"API key environment variable {config.api_key_env!r} is not set"
            )
        headers["Authorization"] = f"Bearer {api_key}"

    attempts = 1 + config.max_retries
    last_error: BackendError | None = None
    for attempt in range(attempts):
        if attempt > 0:
            backoff = config.retry_backoff[min(attempt - 1, len(config.retry_backoff) - 1)]
            sleep(backoff)
        try:
            status, body, resp_headers = transport(
                config.endpoint_url, payload, headers, config.request_timeout
            )
        except TransportError as exc:
            last_error = exc
            continue
        if status == 429:
            retry_after = None
            raw = resp_headers.get("Retry-After") or resp_headers.get("retry-after")
            if raw is not None:
                try:
                    retry_after = float(raw)
                except ValueError:
                    retry_after = None
            last_error = RateLimitedError(f"rate limited (429): {body}", retry_after)
            continue
        if status >= 500:
            last_error = ApiError(f"server error {status}", status, body)
            continue
        if status >= 300:
            raise ApiError(f"API error {status}", status, body)
        try:
            doc = json.loads(body)
            text = doc["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise ApiError(f"unparseable response body: {exc}", status, body) from exc
        usage = None
        if isinstance(doc.get("usage"), dict):
            usage_doc = doc["usage"]
            if "prompt_tokens" in usage_doc and "completion_tokens" in usage_doc:
                usage = (int(usage_doc["prompt_tokens"]), int(usage_doc["completion_tokens"]))
        return text, usage
    assert last_error is not None
    raise last_error


def complete(
    request: ChatRequest,
    config: BackendConfig,
    *,
    route_salt: str | None = None,
    transport=None,
    sleep=time.sleep,
) -> ChatResponse:
    """Obtain the reply for ``request``: cache, then replay file or HTTP call.

    Transient HTTP failures (network errors, timeouts, 429, 5xx) are retried
    up to ``max_retries`` times with the configured backoff; other non-2xx
    statuses raise immediately. ``transport`` and ``sleep`` exist for tests.
    """
    key = storage_key(request, route_salt)
    cached_text = _cache_read(config, key)
    if cached_text is not None:
        # Still record on cache hits, or a warm cache would leave holes in a
        # freshly recorded replay file.
        if config.kind == "http" and config.record:
            _record_entry(config.replay_file, key, cached_text)
        return ChatResponse(text=cached_text, backend_id=config.kind, cached=True)

    usage = None
    if config.kind == "replay":
        index = _replay_index(config.replay_file)
        if key not in index:
            raise ReplayMissError(key)
        text = index[key]
    else:
        text, usage = _http_complete(
            request, config, transport or _default_transport, sleep
        )
        if config.record:
            _record_entry(config.replay_file, key, text)

    _cache_write(config, key, request, text)
    return ChatResponse(text=text, usage=usage, backend_id=config.kind, cached=False)
