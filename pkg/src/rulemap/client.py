"""Provider-agnostic chat-completion client with live, record, and replay modes.

The wire shape is the widely supported OpenAI-style chat-completions call,
so any compatible gateway works. RECORD persists every response under a
content-addressed key; REPLAY serves exclusively from that cache, which makes
whole benchmark runs deterministic and offline. Credentials never touch the
cache files.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Optional

import requests

from .errors import CacheMiss, ConfigError, TransportError


class ClientMode(Enum):
    LIVE = "live"
    RECORD = "record"
    REPLAY = "replay"


@dataclass(frozen=True)
class DecodingConfig:
    """Decoding parameters sent with every request (defaults pin the
    deterministic regime: temperature 0, top-p 0.01, seed 640)."""

    model: str
    temperature: float = 0.0
    top_p: float = 0.01
    seed: int = 640


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    decoding: DecodingConfig

    def __post_init__(self):
        if not self.user:
            raise ValueError("user message must be non-empty")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: Optional[float] = None  # live modes only
    dropped_params: tuple[str, ...] = ()


def canonical_request(request: ChatRequest) -> str:
    """Canonical serialization: fixed field order, payload bytes as-is."""
    doc = {
        "decoding": {
            "model": request.decoding.model,
            "seed": request.decoding.seed,
            "temperature": request.decoding.temperature,
            "top_p": request.decoding.top_p,
        },
        "system": request.system,
        "user": request.user,
    }
    return json.dumps(doc, ensure_ascii=False, sort_keys=True,
                      separators=(",", ":"))


def cache_key(request: ChatRequest) -> str:
    """Hex digest identifying a request; equal requests <=> equal keys."""
    return hashlib.sha256(canonical_request(request).encode("utf-8")).hexdigest()


# Transport: (url, headers, payload, timeout) -> parsed response body.
# Injectable so tests and fixture builders can stand in for a real gateway.
Transport = Callable[[str, Mapping[str, str], dict, float], dict]


def _http_transport(url: str, headers: Mapping[str, str], payload: dict,
                    timeout: float) -> dict:
    try:
        resp = requests.post(url, headers=dict(headers), json=payload,
                             timeout=timeout)
    except requests.Timeout:
        raise TransportError(f"timeout after {timeout}s calling {url}")
    except requests.RequestException as exc:
        raise TransportError(f"transport failure: {exc}")
    if resp.status_code // 100 != 2:
        raise TransportError(
            f"endpoint returned {resp.status_code}: {resp.text[:200]}",
            status=resp.status_code)
    try:
        return resp.json()
    except ValueError:
        raise TransportError("endpoint returned non-JSON body",
                             status=resp.status_code)


class ChatClient:
    """complete() is safe for concurrent use; live calls are bounded by a
    semaphore, cache writes are write-temp-then-rename atomic."""

    def __init__(self, mode: ClientMode | str,
                 api_base: Optional[str] = None,
                 api_key: Optional[str] = None,
                 cache_dir: Optional[str | Path] = None,
                 capabilities: Optional[Mapping[str, tuple[str, ...]]] = None,
                 parallelism: int = 4,
                 timeout: float = 120.0,
                 transport: Optional[Transport] = None):
        self.mode = ClientMode(mode) if isinstance(mode, str) else mode
        self.api_base = (api_base or "").rstrip("/") or None
        self._api_key = api_key
        self.cache_dir = Path(cache_dir) if cache_dir else None
        # model id -> decoding fields this model rejects (dropped from payload)
        self.capabilities = dict(capabilities or {})
        self.timeout = timeout
        self._transport = transport or _http_transport
        self._live_slots = threading.BoundedSemaphore(max(1, parallelism))
        self._index_lock = threading.Lock()

        if self.mode in (ClientMode.LIVE, ClientMode.RECORD):
            if not self.api_base:
                raise ConfigError("live/record mode needs LLM_API_BASE")
            if not self._api_key:
                raise ConfigError("live/record mode needs LLM_API_KEY")
        if self.mode in (ClientMode.RECORD, ClientMode.REPLAY):
            if not self.cache_dir:
                raise ConfigError("record/replay mode needs LLM_CACHE_DIR")

    @classmethod
    def from_env(cls, **overrides) -> "ChatClient":
        """Build from LLM_MODE, LLM_API_BASE, LLM_API_KEY, LLM_CACHE_DIR."""
        kwargs = {
            "mode": os.environ.get("LLM_MODE", "replay"),
            "api_base": os.environ.get("LLM_API_BASE"),
            "api_key": os.environ.get("LLM_API_KEY"),
            "cache_dir": os.environ.get("LLM_CACHE_DIR"),
        }
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)

    # -- public API ---------------------------------------------------------

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = cache_key(request)
        if self.mode is ClientMode.REPLAY:
            return self._read_cache(key)
        response = self._live_call(request)
        if self.mode is ClientMode.RECORD:
            self._write_cache(key, request, response)
        return response

    # -- live path ----------------------------------------------------------

    def _payload(self, request: ChatRequest) -> tuple[dict, tuple[str, ...]]:
        decoding = request.decoding
        payload = {
            "model": decoding.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        }
        unsupported = set(self.capabilities.get(decoding.model, ()))
        dropped = []
        for name, value in (("temperature", decoding.temperature),
                            ("top_p", decoding.top_p),
                            ("seed", decoding.seed)):
            if name in unsupported:
                dropped.append(name)
            else:
                payload[name] = value
        return payload, tuple(dropped)

    def _live_call(self, request: ChatRequest) -> ChatResponse:
        payload, dropped = self._payload(request)
        url = f"{self.api_base}/chat/completions"
        headers = {"Authorization": f"Bearer {self._api_key}",
                   "Content-Type": "application/json"}
        with self._live_slots:
            started = time.monotonic()
            body = self._transport(url, headers, payload, self.timeout)
            latency_ms = (time.monotonic() - started) * 1000.0
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise TransportError("malformed chat-completion response body")
        usage = body.get("usage") or {}
        return ChatResponse(
            text=text if text is not None else "",
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            latency_ms=latency_ms,
            dropped_params=dropped,
        )

    # -- cache path ----------------------------------------------------------

    def _entry_path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def _read_cache(self, key: str) -> ChatResponse:
        path = self._entry_path(key)
        if not path.is_file():
            raise CacheMiss(key)
        entry = json.loads(path.read_text(encoding="utf-8"))
        stored = entry.get("response", {})
        return ChatResponse(
            text=stored.get("text", ""),
            prompt_tokens=int(stored.get("prompt_tokens", 0)),
            completion_tokens=int(stored.get("completion_tokens", 0)),
            latency_ms=None,
            dropped_params=tuple(stored.get("dropped_params", ())),
        )

    def _write_cache(self, key: str, request: ChatRequest,
                     response: ChatResponse) -> None:
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        recorded_at = datetime.now(timezone.utc).isoformat()
        entry = {
            "key": key,
            "request": {
                "system": request.system,
                "user": request.user,
                "decoding": {
                    "model": request.decoding.model,
                    "temperature": request.decoding.temperature,
                    "top_p": request.decoding.top_p,
                    "seed": request.decoding.seed,
                },
            },
            "response": {
                "text": response.text,
                "prompt_tokens": response.prompt_tokens,
                "completion_tokens": response.completion_tokens,
                "latency_ms": response.latency_ms,
                "dropped_params": list(response.dropped_params),
            },
            "recorded_at": recorded_at,
        }
        self._atomic_write(self._entry_path(key), entry)
        with self._index_lock:
            index_path = self.cache_dir / "index.json"
            index = {"entries": {}}
            if index_path.is_file():
                index = json.loads(index_path.read_text(encoding="utf-8"))
            index.setdefault("entries", {})[key] = {
                "model": request.decoding.model,
                "recorded_at": recorded_at,
            }
            index["entries"] = dict(sorted(index["entries"].items()))
            self._atomic_write(index_path, index)

    @staticmethod
    def _atomic_write(path: Path, doc: dict) -> None:
        tmp = path.with_suffix(f".tmp.{os.getpid()}.{threading.get_ident()}")
        tmp.write_text(json.dumps(doc, ensure_ascii=False, indent=2,
                                  sort_keys=False) + "\n", encoding="utf-8")
        os.replace(tmp, path)
