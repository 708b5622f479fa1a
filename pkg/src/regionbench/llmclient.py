"""Completion backends: a chat-completion HTTP client plus deterministic offline ones.

Every backend exposes ``complete(request) -> QueryResponse``. Offline
backends are pure functions of (prompt text, seed). :class:`ResponseCache`
stores raw responses content-addressed on disk so a finished run can be
replayed without any network access.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from .oracle import RegionTrace
from .prompt import PromptBundle, format_final, read_prompt_graph

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QueryRequest:
    prompt: PromptBundle
    seed: int
    temperature: float = 0.0
    model: str = ""

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class QueryResponse:
    raw_text: str
    backend: str
    model: str
    latency: float = 0.0
    cached: bool = False


class Backend(Protocol):
    name: str
    model: str
    temperature: float

    def complete(self, request: QueryRequest) -> QueryResponse: ...


class BackendError(RuntimeError):
    pass


class CacheMissError(BackendError):
    pass


class MissingCredentialError(BackendError):
    def __init__(self, var: str):
        super().__init__(f"environment variable {var} with the API key is not set")
        self.var = var


class HttpStatusError(BackendError):
    def __init__(self, status: int, attempts: int, body: str = ""):
        super().__init__(f"HTTP {status} after {attempts} attempt(s): {body[:300]}")
        self.status = status
        self.attempts = attempts


class RateLimitError(HttpStatusError):
    pass


class TransportError(BackendError):
    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} after {attempts} attempt(s)")
        self.attempts = attempts


# ---------------------------------------------------------------------------
# Replay cache
# ---------------------------------------------------------------------------


def cache_key(prompt_text: str, model: str, seed: int, temperature: float) -> str:
    payload = json.dumps([prompt_text, model, seed, float(temperature)], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    """Content-addressed raw responses under ``root``; writes are serialized."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._lock = threading.Lock()

    def path(self, key: str) -> Path:
        return self.root / f"{key}.txt"

    def key_for(self, request: QueryRequest, model: str) -> str:
        return cache_key(request.prompt.text, model, request.seed, request.temperature)

    def get(self, key: str) -> str | None:
        path = self.path(key)
        if not path.exists():
            return None
        return path.read_bytes().decode("utf-8")

    def put(self, key: str, text: str) -> None:
        path = self.path(key)
        with self._lock:
            if path.exists():
                return
            self.root.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".part")
            with os.fdopen(fd, "wb") as fh:
                fh.write(text.encode("utf-8"))
            os.replace(tmp, path)

    def __len__(self) -> int:
        return len(list(self.root.glob("*.txt"))) if self.root.exists() else 0


class CachingBackend:
    """Serve from the cache when possible, otherwise call ``inner`` and record."""

    def __init__(self, inner: Backend, cache: ResponseCache):
        self.inner = inner
        self.cache = cache
        self.name = inner.name
        self.model = inner.model
        self.temperature = inner.temperature

    def complete(self, request: QueryRequest) -> QueryResponse:
        key = self.cache.key_for(request, self.model)
        hit = self.cache.get(key)
        if hit is not None:
            return QueryResponse(hit, self.name, self.model, 0.0, cached=True)
        response = self.inner.complete(request)
        self.cache.put(key, response.raw_text)
        return response


class ReplayBackend:
    """Answers only from a cache; a miss is an error, never a network call."""

    def __init__(self, cache: ResponseCache, name: str, model: str, temperature: float = 0.0):
        self.cache = cache
        self.name = name
        self.model = model
        self.temperature = temperature

    def complete(self, request: QueryRequest) -> QueryResponse:
        key = self.cache.key_for(request, self.model)
        hit = self.cache.get(key)
        if hit is None:
            raise CacheMissError(
                f"no cached response for instruction {request.prompt.instruction_id!r} "
                f"seed {request.seed} (key {key[:12]})"
            )
        return QueryResponse(hit, self.name, self.model, 0.0, cached=True)


# ---------------------------------------------------------------------------
# Offline backends
# ---------------------------------------------------------------------------


class EchoReferenceBackend:
    """Returns a designated ground-truth reference in the final-output form."""

    name = "echo-reference"

    def __init__(
        self,
        lookup: Callable[[PromptBundle], Sequence[RegionTrace]],
        reference_index: int = 0,
        model: str = "echo-reference",
    ):
        self.lookup = lookup
        self.reference_index = reference_index
        self.model = model
        self.temperature = 0.0

    def complete(self, request: QueryRequest) -> QueryResponse:
        refs = self.lookup(request.prompt)
        if not refs:
            raise BackendError(f"no reference to echo for {request.prompt.instruction_id!r}")
        ref = refs[min(self.reference_index, len(refs) - 1)]
        return QueryResponse(format_final(ref), self.name, self.model)


class PlannerBackend:
    """Instruction-blind control: breadth-first region path from state to goal.

    Reads only the adjacency list and State/Goal lines of the prompt. When
    the goal is unreachable it answers with the start region alone.
    """

    name = "planner"

    def __init__(self, model: str = "bfs-planner"):
        self.model = model
        self.temperature = 0.0

    def complete(self, request: QueryRequest) -> QueryResponse:
        graph, state, goal = read_prompt_graph(request.prompt.text)
        path = graph.shortest_path(state, goal) or [state]
        return QueryResponse(format_final(tuple(path)), self.name, self.model)


class RandomWalkBackend:
    """Seeded random walk over the prompt's adjacency list, stopping at the goal."""

    name = "random-walk"

    def __init__(self, max_steps: int = 30, model: str = "random-walk"):
        self.max_steps = max_steps
        self.model = model
        self.temperature = 0.0

    def complete(self, request: QueryRequest) -> QueryResponse:
        graph, state, goal = read_prompt_graph(request.prompt.text)
        digest = hashlib.sha256(f"{request.seed}\n{request.prompt.text}".encode()).digest()
        rng = random.Random(int.from_bytes(digest[:8], "big"))
        walk = [state]
        while walk[-1] != goal and len(walk) <= self.max_steps:
            nbrs = graph.neighbors(walk[-1])
            if not nbrs:
                break
            walk.append(rng.choice(nbrs))
        return QueryResponse(format_final(tuple(walk)), self.name, self.model)


# ---------------------------------------------------------------------------
# HTTP chat-completion backend
# ---------------------------------------------------------------------------

RETRYABLE_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})


class HttpChatBackend:
    """Chat-completion client: one user message in, first choice's text out.

    Retries transport errors and retryable statuses with bounded exponential
    backoff; enforces a minimum interval between requests.
    """

    name = "http"

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str,
        temperature: float = 0.0,
        timeout: float = 120.0,
        max_retries: int = 4,
        min_interval: float = 0.0,
        backoff_base: float = 1.0,
        backoff_max: float = 60.0,
        send_seed: bool = True,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.temperature = temperature
        self.timeout = timeout
        self.max_retries = max_retries
        self.min_interval = min_interval
        self.backoff_base = backoff_base
        self.backoff_max = backoff_max
        self.send_seed = send_seed
        self._client = client
        self._sleep = sleep
        self._pace_lock = threading.Lock()
        self._last_request = 0.0
        self.calls = 0

    def _api_key(self) -> str:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise MissingCredentialError(self.api_key_env)
        return key

    def _pace(self) -> None:
        with self._pace_lock:
            wait = self._last_request + self.min_interval - time.monotonic()
            if wait > 0:
                self._sleep(wait)
            self._last_request = time.monotonic()

    def _client_or_default(self) -> httpx.Client:
        if self._client is None:
            self._client = httpx.Client(timeout=self.timeout)
        return self._client

    def payload(self, request: QueryRequest) -> dict:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt.text}],
            "temperature": request.temperature,
        }
        if self.send_seed:
            body["seed"] = request.seed
        return body

    def complete(self, request: QueryRequest) -> QueryResponse:
        headers = {"Authorization": f"Bearer {self._api_key()}"}
        client = self._client_or_default()
        attempts = 0
        while True:
            attempts += 1
            self._pace()
            self.calls += 1
            started = time.monotonic()
            try:
                resp = client.post(
                    self.endpoint, json=self.payload(request), headers=headers, timeout=self.timeout
                )
            except httpx.HTTPError as exc:
                if attempts > self.max_retries:
                    raise TransportError(f"{type(exc).__name__}: {exc}", attempts) from exc
                self._backoff(attempts, f"transport error {exc!r}")
                continue
            if resp.status_code == 200:
                text = resp.json()["choices"][0]["message"]["content"]
                return QueryResponse(text, self.name, self.model, time.monotonic() - started)
            if resp.status_code not in RETRYABLE_STATUS or attempts > self.max_retries:
                cls = RateLimitError if resp.status_code == 429 else HttpStatusError
                raise cls(resp.status_code, attempts, resp.text)
            self._backoff(attempts, f"HTTP {resp.status_code}")

    def _backoff(self, attempt: int, why: str) -> None:
        delay = min(self.backoff_max, self.backoff_base * 2 ** (attempt - 1))
        logger.warning("%s; retrying in %.1fs (attempt %d)", why, delay, attempt)
        self._sleep(delay)


def configure_http_backend(
    endpoint: str,
    model: str,
    api_key_env: str,
    temperature: float = 0.0,
    timeout: float = 120.0,
    max_retries: int = 4,
    **kwargs,
) -> HttpChatBackend:
    return HttpChatBackend(
        endpoint=endpoint,
        model=model,
        api_key_env=api_key_env,
        temperature=temperature,
        timeout=timeout,
        max_retries=max_retries,
        **kwargs,
    )
