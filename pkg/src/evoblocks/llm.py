"""Chat-completion backends, per-call parameter sampling, code extraction.

Two backends sit behind one interface: an OpenAI-compatible HTTP client with
retry/backoff, and a deterministic table-driven mock for reproducible runs.
Every completed call appends one record to the run's transcript log.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from .errors import BackendError, BackendUnavailable, ConfigError, CorpusMiss, EmptyCode

RETRYABLE_STATUSES = (408, 429, 500, 502, 503, 504)


@dataclass(frozen=True)
class GenerationParams:
    temperature: float
    max_tokens: int


@dataclass(frozen=True)
class ParamRanges:
    """Sampling ranges for per-call generation parameters."""

    temperature_lo: float = 0.05
    temperature_hi: float = 0.4
    max_tokens_lo: int = 600
    max_tokens_hi: int = 1400

    def __post_init__(self):
        if self.temperature_lo > self.temperature_hi:
            raise ConfigError("temperature range is inverted")
        if self.max_tokens_lo > self.max_tokens_hi:
            raise ConfigError("max_tokens range is inverted")
        if not (0.0 <= self.temperature_lo and self.temperature_hi <= 2.0):
            raise ConfigError("temperature range must lie within [0, 2]")
        if self.max_tokens_lo < 1:
            raise ConfigError("max_tokens must be positive")


def sample_params(rng: random.Random, ranges: ParamRanges) -> GenerationParams:
    """Uniform draw of temperature and max_tokens from the configured ranges."""
    return GenerationParams(
        temperature=rng.uniform(ranges.temperature_lo, ranges.temperature_hi),
        max_tokens=rng.randint(ranges.max_tokens_lo, ranges.max_tokens_hi),
    )


@dataclass(frozen=True)
class ChatRequest:
    """One chat completion to issue.

    mock_key is the semantic corpus key ("kind:block[:category:persona]")
    used by the mock backend; fallback_text is returned (fenced) on a corpus
    miss when the identity policy is active.
    """

    system_text: str
    user_text: str
    temperature: float = 0.2
    max_tokens: int = 1000
    mock_key: str = ""
    fallback_text: str = ""

    def __post_init__(self):
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        if not (0.0 <= self.temperature <= 2.0):
            raise ValueError(f"temperature out of [0, 2]: {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    def digest(self) -> str:
        payload = json.dumps(
            {
                "system": self.system_text,
                "user": self.user_text,
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class LlmResponse:
    raw_text: str
    backend_id: str
    latency: float
    request_digest: str


class MockBackend:
    """Deterministic corpus-driven stand-in for a live model.

    Corpus: JSON object mapping keys to response text. Lookup order per
    request: "sha256:<request digest>" (strict), the full semantic key
    "kind:block:category:persona", then the block-level key "kind:block".
    A miss either raises CorpusMiss or echoes the request's fallback text
    inside a code fence, per on_miss.
    """

    backend_id = "mock"

    def __init__(self, corpus: dict[str, str] | None = None, on_miss: str = "identity"):
        if on_miss not in ("identity", "error"):
            raise ConfigError(f"on_miss must be identity or error, got {on_miss!r}")
        self.corpus = dict(corpus or {})
        self.on_miss = on_miss

    @classmethod
    def from_file(cls, path: str | Path, on_miss: str = "identity") -> "MockBackend":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load mock corpus {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"mock corpus {path} must be a JSON object")
        return cls(corpus=data, on_miss=on_miss)

    def ping(self) -> None:
        return None

    def complete(self, request: ChatRequest) -> str:
        for key in self._candidate_keys(request):
            if key in self.corpus:
                return self.corpus[key]
        if self.on_miss == "error":
            raise CorpusMiss(f"no corpus entry for {request.mock_key!r}")
        return wrap_fence(request.fallback_text)

    @staticmethod
    def _candidate_keys(request: ChatRequest) -> list[str]:
        keys = [f"sha256:{request.digest()}"]
        if request.mock_key:
            keys.append(request.mock_key)
            parts = request.mock_key.split(":")
            if len(parts) > 2:
                keys.append(":".join(parts[:2]))
        return keys


class HttpBackend:
    """OpenAI-compatible chat-completions client with retry and backoff."""

    def __init__(
        self,
        base_url: str,
        model: str,
        auth_env: str = "EVOBLOCKS_API_TOKEN",
        max_attempts: int = 3,
        backoff_seconds: float = 1.0,
        timeout: float = 120.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.auth_env = auth_env
        self.max_attempts = max_attempts
        self.backoff_seconds = backoff_seconds
        self.timeout = timeout
        self.backend_id = f"http:{model}"
        self._session = requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def ping(self) -> None:
        try:
            self._session.get(self.base_url, timeout=min(self.timeout, 10.0))
        except requests.RequestException as exc:
            raise BackendUnavailable(f"cannot reach {self.base_url}: {exc}") from exc

    def complete(self, request: ChatRequest) -> str:
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        last_exc: Exception | None = None
        last_status: int | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                delay = self.backoff_seconds * (2 ** (attempt - 1))
                time.sleep(delay * random.uniform(0.8, 1.2))
            try:
                resp = self._session.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=self._headers(),
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_exc = exc
                continue
            if resp.status_code == 200:
                try:
                    return resp.json()["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError) as exc:
                    raise BackendError(resp.status_code, f"malformed response body: {exc}") from exc
            last_status = resp.status_code
            if resp.status_code not in RETRYABLE_STATUSES:
                raise BackendError(resp.status_code, resp.text[:200])
        if last_status is not None:
            raise BackendError(last_status, "retries exhausted")
        raise BackendUnavailable(f"retries exhausted: {last_exc}")


class LlmGateway:
    """Backend wrapper that enforces a request cap and logs a transcript.

    Every complete() appends exactly one NDJSON record
    {timestamp, digest, request, response, latency_ms} to transcript_path.
    """

    def __init__(self, backend, transcript_path: str | Path | None = None, request_cap: int = 1):
        if request_cap < 1:
            raise ConfigError("request_cap must be >= 1")
        self.backend = backend
        self.transcript_path = Path(transcript_path) if transcript_path else None
        self._gate = threading.Semaphore(request_cap)
        self._log_lock = threading.Lock()
        self.call_count = 0

    def complete(self, request: ChatRequest) -> LlmResponse:
        digest = request.digest()
        with self._gate:
            t0 = time.monotonic()
            raw = self.backend.complete(request)
            latency = time.monotonic() - t0
        response = LlmResponse(
            raw_text=raw,
            backend_id=self.backend.backend_id,
            latency=latency,
            request_digest=digest,
        )
        self._append_transcript(request, response)
        return response

    def ping(self) -> None:
        self.backend.ping()

    def _append_transcript(self, request: ChatRequest, response: LlmResponse) -> None:
        with self._log_lock:
            self.call_count += 1
            if self.transcript_path is None:
                return
            record = {
                "timestamp": time.time(),
                "digest": response.request_digest,
                "request": {
                    "system": request.system_text,
                    "user": request.user_text,
                    "temperature": request.temperature,
                    "max_tokens": request.max_tokens,
                    "mock_key": request.mock_key,
                },
                "response": response.raw_text,
                "latency_ms": response.latency * 1000.0,
            }
            with self.transcript_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def wrap_fence(text: str) -> str:
    """Wrap text in a code fence such that extract_code returns it verbatim."""
    return f"```\n{text}\n```"


def extract_code(raw_text: str) -> str:
    """Pull bare source out of a model response.

    Returns the trimmed contents of the first fenced block; with no fence, the
    whole text trimmed; a single dangling fence is treated as an artifact and
    stripped. Any line whose stripped form starts with a triple backtick counts
    as a fence boundary, so extracted text never contains one and the function
    is idempotent. Raises EmptyCode when nothing remains.
    """
    lines = raw_text.split("\n")
    bounds = [i for i, l in enumerate(lines) if l.lstrip().startswith("```")]
    if len(bounds) >= 2:
        out = "\n".join(lines[bounds[0] + 1:bounds[1]]).strip()
    elif len(bounds) == 1:
        after = "\n".join(lines[bounds[0] + 1:]).strip()
        if after:
            out = after
            while out.endswith("`"):
                out = out.rstrip("`").strip()
        else:
            out = "\n".join(lines[:bounds[0]]).strip()
    else:
        out = raw_text.strip()
    if not out:
        raise EmptyCode("no code found in model response")
    return out
