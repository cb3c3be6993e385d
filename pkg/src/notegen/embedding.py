"""Instruction-conditioned dialogue embeddings and cosine similarity.

Two providers sit behind one contract: a deterministic local provider
(character n-gram hashing, dependency-free, runs offline) and a client for a
remote embedding service. Vectors are L2-normalized; the zero vector is
returned only for empty text and is flagged degenerate.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

DEFAULT_INSTRUCTION = "Represent the Medicine dialogue for clustering:"
LOCAL_DIMS = 1024
_NGRAM_SIZES = (3, 4, 5)
_NORM_TOLERANCE = 1e-3


class EmbeddingError(ValueError):
    """Invalid embedding input or provider configuration."""


class RemoteEmbeddingError(RuntimeError):
    """Remote provider failure; carries attempt metadata."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray

    @property
    def dims(self) -> int:
        return int(self.values.shape[0])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.values == 0.0))

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] == 0:
            raise EmbeddingError("embedding must be a non-empty 1-d vector")
        if not np.all(np.isfinite(values)):
            raise EmbeddingError("embedding contains non-finite values")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class EmbedderConfig:
    """Provider selection plus the shared instruction string.

    provider: "local_hash" or "remote".
    instruction: prepended/conditioned per provider contract.
    dims: output dimensionality of the local provider.
    endpoint/model/token_env: remote provider wire settings.
    cache_dir: optional on-disk cache keyed by (provider, instruction, text hash).
    max_in_flight: bound on concurrent remote requests.
    """

    provider: str = "local_hash"
    instruction: str = DEFAULT_INSTRUCTION
    dims: int = LOCAL_DIMS
    endpoint: str = ""
    model: str = ""
    token_env: str = "NOTEGEN_EMBED_TOKEN"
    cache_dir: str = ""
    max_in_flight: int = 4
    max_attempts: int = 3
    base_backoff: float = 1.0

    def __post_init__(self) -> None:
        if self.provider not in ("local_hash", "remote"):
            raise EmbeddingError(f"unknown embedding provider {self.provider!r}")
        if self.provider == "remote" and not self.endpoint:
            raise EmbeddingError("remote provider requires an endpoint")
        if self.dims <= 0:
            raise EmbeddingError("dims must be positive")

    def to_dict(self) -> dict:
        return {
            "provider": self.provider,
            "instruction": self.instruction,
            "dims": self.dims,
            "endpoint": self.endpoint,
            "model": self.model,
            "token_env": self.token_env,
            "cache_dir": self.cache_dir,
            "max_in_flight": self.max_in_flight,
            "max_attempts": self.max_attempts,
            "base_backoff": self.base_backoff,
        }


def _renormalize(values: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        return values
    if abs(norm - 1.0) > _NORM_TOLERANCE:
        return values / norm
    return values


class LocalHashEmbedder:
    """Deterministic offline embedder.

    Character n-grams (n = 3..5) are hash-bucketed into a fixed-size term
    frequency vector and L2-normalized. The instruction salts the hash, so
    different instructions induce different (but individually deterministic)
    embedding spaces without injecting shared mass into every vector.
    """

    def __init__(self, config: EmbedderConfig):
        self.config = config
        self._salt = config.instruction.encode("utf-8") + b"\x00"

    def _bucket(self, ngram: str) -> int:
        digest = hashlib.blake2b(self._salt + ngram.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.config.dims

    def embed(self, text: str) -> EmbeddingVector:
        counts = np.zeros(self.config.dims, dtype=np.float64)
        if text:
            for n in _NGRAM_SIZES:
                for i in range(max(0, len(text) - n + 1)):
                    counts[self._bucket(text[i : i + n])] += 1.0
            if len(text) < min(_NGRAM_SIZES):
                counts[self._bucket(text)] += 1.0
        norm = float(np.linalg.norm(counts))
        if norm > 0.0:
            counts /= norm
        return EmbeddingVector(counts)


class RemoteEmbedder:
    """Client for the remote embedding service.

    Wire contract: POST {model, instruction, inputs: [text, ...]} to the
    configured endpoint; response {embeddings: [[float, ...], ...]}.
    Authorization bearer token is read from the environment variable named in
    the config. Concurrent requests are bounded by a semaphore.
    """

    def __init__(self, config: EmbedderConfig, session: requests.Session | None = None):
        self.config = config
        self._session = session or requests.Session()
        self._semaphore = threading.Semaphore(max(1, config.max_in_flight))

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def embed_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        body = {
            "model": self.config.model,
            "instruction": self.config.instruction,
            "inputs": list(texts),
        }
        last_error: Exception | None = None
        for attempt in range(1, self.config.max_attempts + 1):
            try:
                with self._semaphore:
                    response = self._session.post(
                        self.config.endpoint, json=body, headers=self._headers(), timeout=60
                    )
            except requests.RequestException as exc:
                last_error = exc
            else:
                if response.status_code == 200:
                    try:
                        rows = response.json()["embeddings"]
                        vectors = [
                            EmbeddingVector(_renormalize(np.asarray(row, dtype=np.float64)))
                            for row in rows
                        ]
                    except (KeyError, ValueError, TypeError) as exc:
                        raise RemoteEmbeddingError(
                            f"malformed embedding response: {exc}", attempts=attempt
                        ) from exc
                    if len(vectors) != len(texts):
                        raise RemoteEmbeddingError(
                            f"expected {len(texts)} embeddings, got {len(vectors)}",
                            attempts=attempt,
                        )
                    return vectors
                last_error = RemoteEmbeddingError(
                    f"embedding service returned {response.status_code}", attempts=attempt
                )
                if response.status_code not in (429, 500, 502, 503, 504):
                    break
            if attempt < self.config.max_attempts:
                time.sleep(self.config.base_backoff * (2 ** (attempt - 1)))
        raise RemoteEmbeddingError(
            f"embedding request failed after {self.config.max_attempts} attempt(s): {last_error}",
            attempts=self.config.max_attempts,
        )

    def embed(self, text: str) -> EmbeddingVector:
        return self.embed_batch([text])[0]


@dataclass
class Embedder:
    """Provider facade with an in-memory memo and an optional on-disk cache."""

    config: EmbedderConfig
    _provider: object = field(init=False, repr=False)
    _memo: dict[str, EmbeddingVector] = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        if self.config.provider == "local_hash":
            self._provider = LocalHashEmbedder(self.config)
        else:
            self._provider = RemoteEmbedder(self.config)

    def _cache_path(self, text: str) -> Path | None:
        if not self.config.cache_dir:
            return None
        key = hashlib.sha256(
            "\x00".join(
                (self.config.provider, self.config.instruction, text)
            ).encode("utf-8")
        ).hexdigest()
        return Path(self.config.cache_dir) / f"{key}.json"

    def embed(self, text: str) -> EmbeddingVector:
        memoized = self._memo.get(text)
        if memoized is not None:
            return memoized
        cache_path = self._cache_path(text)
        if cache_path is not None and cache_path.exists():
            vector = EmbeddingVector(
                np.asarray(json.loads(cache_path.read_text()), dtype=np.float64)
            )
            self._memo[text] = vector
            return vector
        vector = self._provider.embed(text)
        if cache_path is not None:
            cache_path.parent.mkdir(parents=True, exist_ok=True)
            cache_path.write_text(json.dumps(vector.values.tolist()))
        self._memo[text] = vector
        return vector


def embed(config: EmbedderConfig, text: str) -> EmbeddingVector:
    """Embed one text under the configured provider."""
    return Embedder(config).embed(text)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity in [-1, 1]; rejects dimension mismatch and zero vectors."""
    if a.dims != b.dims:
        raise EmbeddingError(f"dimension mismatch: {a.dims} vs {b.dims}")
    if a.is_zero or b.is_zero:
        raise EmbeddingError("cosine undefined for the zero vector")
    # normalize before the dot product: stabler than dividing by the norm product
    score = float(np.dot(a.values / a.norm, b.values / b.norm))
    return max(-1.0, min(1.0, score))
