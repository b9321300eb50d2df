"""Text-to-vector providers and the cosine primitive used by retrieval and tracking."""

from __future__ import annotations

import hashlib
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
import requests

_TOKEN_RE = re.compile(r"[a-z0-9]+")

DEFAULT_DIM = 256
DEFAULT_HASH_SEED = 0x9E3779B97F4A7C15  # fixed 64-bit seed shared by all hash providers

API_KEY_ENV = "IMLOOP_API_KEY"


class EmbeddingError(ValueError):
    """Bad embedding input or incompatible vectors."""


class EmbeddingTransportError(RuntimeError):
    """Retryable transport/HTTP failure against a remote embedding endpoint."""


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens; the tokenization shared with the lexical refiner."""
    return _TOKEN_RE.findall(text.lower())


@runtime_checkable
class EmbeddingProvider(Protocol):
    dim: int

    def embed_text(self, text: str) -> np.ndarray: ...

    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]: ...


@dataclass(frozen=True)
class HashingEmbedder:
    """Deterministic signed feature-hashing bag-of-tokens embedder.

    Each token is hashed into one of ``dim`` buckets with a fixed keyed 64-bit
    hash; the top bit picks the sign. The accumulated vector is L2-normalized,
    so identical token multisets map to identical unit vectors regardless of
    word order.
    """

    dim: int = DEFAULT_DIM
    seed: int = DEFAULT_HASH_SEED

    def _hash64(self, data: str) -> int:
        key = self.seed.to_bytes(8, "little")
        digest = hashlib.blake2b(data.encode("utf-8"), digest_size=8, key=key).digest()
        return int.from_bytes(digest, "little")

    def token_bucket(self, token: str) -> int:
        """The bucket a token accumulates into; useful for collision diagnostics."""
        return self._hash64(token) % self.dim

    def embed_text(self, text: str) -> np.ndarray:
        if not text.strip():
            raise EmbeddingError("cannot embed empty text")
        tokens = tokenize(text)
        acc = np.zeros(self.dim, dtype=np.float64)
        for tok in tokens:
            h = self._hash64(tok)
            sign = -1.0 if (h >> 63) & 1 else 1.0
            acc[h % self.dim] += sign
        norm = float(np.linalg.norm(acc))
        if norm == 0.0:
            # No alphanumeric tokens, or exact sign cancellation: fall back to a
            # one-hot keyed on the sorted token multiset so the result stays a
            # deterministic unit vector and order invariance is preserved.
            acc[self._hash64(" ".join(sorted(tokens))) % self.dim] = 1.0
            norm = 1.0
        return (acc / norm).astype(np.float32)

    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed_text(t) for t in texts]


class CachingProvider:
    """Memoizes another provider by exact text. One instance per episode;
    not safe for concurrent use."""

    def __init__(self, inner: EmbeddingProvider):
        self.inner = inner
        self.dim = inner.dim
        self._cache: dict[str, np.ndarray] = {}

    def embed_text(self, text: str) -> np.ndarray:
        vec = self._cache.get(text)
        if vec is None:
            vec = self.inner.embed_text(text)
            self._cache[text] = vec
        return vec

    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed_text(t) for t in texts]


@dataclass
class RemoteEmbedder:
    """Client for a JSON embedding endpoint: POST {"texts": [...]} -> {"vectors": [[...]]}.

    Requests are batched (``batch_size`` texts max) and the number of in-flight
    HTTP calls is bounded by a semaphore so concurrent episodes cannot stampede
    the endpoint. Transport and 5xx failures are retried with backoff, then
    surfaced as EmbeddingTransportError.
    """

    endpoint: str
    dim: int = DEFAULT_DIM
    api_key: str | None = None
    batch_size: int = 64
    timeout: float = 30.0
    max_retries: int = 2
    max_inflight: int = 4
    retry_backoff: float = 0.2
    _gate: threading.Semaphore = field(init=False, repr=False)

    def __post_init__(self):
        self._gate = threading.Semaphore(self.max_inflight)

    def embed_text(self, text: str) -> np.ndarray:
        return self.embed_texts([text])[0]

    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]:
        for t in texts:
            if not t.strip():
                raise EmbeddingError("cannot embed empty text")
        out: list[np.ndarray] = []
        for start in range(0, len(texts), self.batch_size):
            out.extend(self._post_batch(list(texts[start : start + self.batch_size])))
        return out

    def _post_batch(self, batch: list[str]) -> list[np.ndarray]:
        headers = {"Content-Type": "application/json"}
        key = self.api_key or os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last_err: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.retry_backoff * (2 ** (attempt - 1)))
            try:
                with self._gate:
                    resp = requests.post(
                        self.endpoint, json={"texts": batch}, headers=headers, timeout=self.timeout
                    )
                if resp.status_code >= 500:
                    last_err = EmbeddingTransportError(f"server error {resp.status_code}")
                    continue
                resp.raise_for_status()
                vectors = resp.json()["vectors"]
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_err = exc
                continue
            return [self._to_unit(v) for v in vectors]
        raise EmbeddingTransportError(f"embedding endpoint failed after retries: {last_err}")

    def _to_unit(self, values: Sequence[float]) -> np.ndarray:
        vec = np.asarray(values, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise EmbeddingError(f"endpoint returned dim {vec.shape}, expected ({self.dim},)")
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise EmbeddingError("endpoint returned a zero vector")
        return (vec / norm).astype(np.float32)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity in float64, clamped to [-1, 1]. Symmetric by construction."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EmbeddingError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise EmbeddingError("cosine undefined for a zero vector")
    value = float(np.dot(a, b) / (na * nb))
    return max(-1.0, min(1.0, value))
