"""OpenAI-compatible HTTP clients for chat completion and embeddings."""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass

import numpy as np
import requests

from .errors import BackendError

log = logging.getLogger(__name__)

DEFAULT_TOKEN_ENV = "CKMGRAPHRAG_API_KEY"


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"  # mock | remote
    base_url: str = ""
    model: str = "gpt-3.5-turbo"
    timeout: float = 60.0
    max_retries: int = 3
    token_env: str = DEFAULT_TOKEN_ENV
    max_in_flight: int = 4
    backoff_s: float = 0.5

    def __post_init__(self):
        if self.kind not in ("mock", "remote"):
            raise ValueError(f"backend kind must be mock or remote, got {self.kind!r}")
        if self.kind == "remote" and not self.base_url:
            raise ValueError("remote backend requires base_url")


class HttpClient:
    """Shared POST logic: auth header, in-flight cap, retries with exponential backoff."""

    def __init__(self, cfg: BackendConfig, session: requests.Session | None = None):
        if not cfg.base_url:
            raise ValueError("base_url is required")
        self.cfg = cfg
        self.session = session or requests.Session()
        self._slots = threading.BoundedSemaphore(max(1, cfg.max_in_flight))
        self._lock = threading.Lock()
        self.request_count = 0

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.cfg.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def post(self, route: str, payload: dict) -> dict:
        url = self.cfg.base_url.rstrip("/") + route
        last_error = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                time.sleep(self.cfg.backoff_s * 2 ** (attempt - 1))
            with self._lock:
                self.request_count += 1
            try:
                with self._slots:
                    resp = self.session.post(url, json=payload, headers=self._headers(),
                                             timeout=self.cfg.timeout)
            except requests.RequestException as exc:
                last_error = exc
                log.warning("POST %s failed (attempt %d): %s", url, attempt + 1, exc)
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last_error = f"HTTP {resp.status_code}"
                log.warning("POST %s returned %s (attempt %d)", url, resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise BackendError(f"POST {url} returned HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise BackendError(f"POST {url} returned invalid JSON") from exc
        raise BackendError(f"POST {url} failed after {self.cfg.max_retries + 1} attempts: {last_error}")


class ChatClient(HttpClient):
    def complete(self, messages: list[dict[str, str]]) -> str:
        data = self.post("/chat/completions", {
            "model": self.cfg.model,
            "messages": messages,
            "temperature": 0,
        })
        try:
            return data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"unexpected chat completion payload: {data!r}"[:300]) from exc


class RemoteEmbedder(HttpClient):
    """Embedding backend with the same call shape as the hashing embedder."""

    def __call__(self, text: str) -> np.ndarray:
        data = self.post("/embeddings", {"model": self.cfg.model, "input": text})
        try:
            vec = np.asarray(data["data"][0]["embedding"], dtype=float)
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendError("unexpected embeddings payload") from exc
        if not np.all(np.isfinite(vec)):
            raise BackendError("embedding contains non-finite values")
        return vec
