"""Minimal chat-completion endpoint client shared by the listwise refiner and
the LLM reasoner backends."""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field

import requests

from .embed import API_KEY_ENV


class EndpointError(RuntimeError):
    """Transport failure or unusable response from a chat endpoint."""


@dataclass
class ChatEndpoint:
    """POSTs {"model", "messages", "temperature", "max_tokens"} and returns the
    first choice's message content. In-flight calls are bounded by a semaphore."""

    url: str
    model: str = "default"
    api_key: str | None = None
    timeout: float = 60.0
    max_retries: int = 2
    max_inflight: int = 4
    retry_backoff: float = 0.2
    _gate: threading.Semaphore = field(init=False, repr=False)

    def __post_init__(self):
        self._gate = threading.Semaphore(self.max_inflight)

    def complete(self, messages: list[dict], temperature: float = 0.0, max_tokens: int = 256) -> str:
        headers = {"Content-Type": "application/json"}
        key = self.api_key or os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.model,
            "messages": messages,
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        last_err: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.retry_backoff * (2 ** (attempt - 1)))
            try:
                with self._gate:
                    resp = requests.post(self.url, json=payload, headers=headers, timeout=self.timeout)
                if resp.status_code >= 500:
                    last_err = EndpointError(f"server error {resp.status_code}")
                    continue
                resp.raise_for_status()
                data = resp.json()
                return str(data["choices"][0]["message"]["content"])
            except (requests.RequestException, KeyError, IndexError, TypeError, ValueError) as exc:
                last_err = exc
                continue
        raise EndpointError(f"chat endpoint failed after retries: {last_err}")
