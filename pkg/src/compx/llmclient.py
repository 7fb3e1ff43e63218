"""Chat-completion client for OpenAI-compatible HTTP endpoints.

A scripted transport replays canned responses in FIFO order, which keeps the
whole agent pipeline deterministic and network-free in tests; the live
transport POSTs to ``{base_url}/chat/completions`` with retry/backoff.
"""

from __future__ import annotations

import os
import threading
import time
from collections import deque
from dataclasses import dataclass

import httpx

from .errors import AuthMissing, EmptyCompletion, HttpError, ScriptExhausted
from .prompts import PromptMessage

API_KEY_ENV = "COMPX_API_KEY"
BASE_URL_ENV = "COMPX_BASE_URL"
MODEL_ENV = "COMPX_MODEL"

_BACKOFF_SECONDS = (1.0, 2.0, 4.0)


@dataclass
class ChatConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o"
    temperature: float = 0.7
    max_retries: int = 3
    timeout: float = 60.0
    api_key: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @classmethod
    def from_env(cls, **overrides) -> "ChatConfig":
        env = {}
        if os.environ.get(BASE_URL_ENV):
            env["base_url"] = os.environ[BASE_URL_ENV]
        if os.environ.get(MODEL_ENV):
            env["model"] = os.environ[MODEL_ENV]
        if os.environ.get(API_KEY_ENV):
            env["api_key"] = os.environ[API_KEY_ENV]
        env.update(overrides)
        return cls(**env)

    def resolved_key(self) -> str | None:
        return self.api_key or os.environ.get(API_KEY_ENV)


class ScriptedTransport:
    """Replays canned assistant texts strictly in order (single consumer)."""

    kind = "scripted"

    def __init__(self, responses):
        self._queue = deque(responses)
        self._lock = threading.Lock()
        self.requests: list[dict] = []  # payloads seen, for assertions

    def __len__(self) -> int:
        return len(self._queue)

    def send(self, payload: dict, config: ChatConfig) -> str:
        with self._lock:
            self.requests.append(payload)
            if not self._queue:
                raise ScriptExhausted("scripted transport has no responses left")
            return self._queue.popleft()


class LiveTransport:
    """HTTP transport with exponential backoff on 429/5xx."""

    kind = "live"

    def __init__(self, sleep=time.sleep):
        self._sleep = sleep

    def send(self, payload: dict, config: ChatConfig) -> str:
        key = config.resolved_key()
        if not key:
            raise AuthMissing(f"set {API_KEY_ENV} to use the live transport")
        url = config.base_url.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {key}"}
        last_error: Exception | None = None
        for attempt in range(config.max_retries + 1):
            if attempt > 0:
                self._sleep(_BACKOFF_SECONDS[min(attempt - 1, len(_BACKOFF_SECONDS) - 1)])
            try:
                response = httpx.post(url, json=payload, headers=headers,
                                      timeout=config.timeout)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code == 429 or response.status_code >= 500:
                last_error = HttpError(f"HTTP {response.status_code} from {url}")
                continue
            if response.status_code != 200:
                raise HttpError(f"HTTP {response.status_code} from {url}: "
                                f"{response.text[:200]}")
            try:
                content = response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, ValueError) as exc:
                raise EmptyCompletion(f"malformed completion response: {exc}") from exc
            return content
        raise HttpError(f"gave up after {config.max_retries + 1} attempts: {last_error}")


def chat_complete(messages: list[PromptMessage], config: ChatConfig,
                  transport) -> str:
    """Send a chat request and return the assistant text of the first choice."""
    if not messages:
        raise ValueError("messages must be nonempty")
    payload = {
        "model": config.model,
        "messages": [m.as_dict() for m in messages],
        "temperature": config.temperature,
    }
    text = transport.send(payload, config)
    if not isinstance(text, str) or not text.strip():
        raise EmptyCompletion("assistant returned empty text")
    return text
