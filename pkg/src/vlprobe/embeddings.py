"""Phrase embeddings and cosine similarity, from a vector file or a remote service.

Both providers expose ``embed(phrase) -> vector | None``; None signals an
out-of-vocabulary phrase, which callers exclude rather than guess. Phrase
vectors are the L2-normalized mean of the known token vectors.
"""

from __future__ import annotations

import json
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field

import numpy as np


class EmbeddingError(RuntimeError):
    pass


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a,b) / (|a||b|), clamped to [-1, 1]."""
    if a.shape != b.shape:
        raise EmbeddingError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise EmbeddingError("cosine similarity undefined for zero vectors")
    return float(np.clip(float(np.dot(a, b)) / (na * nb), -1.0, 1.0))


@dataclass
class VocabularyIndex:
    """Immutable token -> vector map; lookups are case-insensitive."""

    vectors: dict[str, np.ndarray]
    dim: int
    source: str = ""
    duplicates: int = 0

    def __len__(self) -> int:
        return len(self.vectors)

    def lookup(self, token: str) -> np.ndarray | None:
        return self.vectors.get(token.lower())

    def embed(self, phrase: str) -> np.ndarray | None:
        return embed_phrase(self, phrase)


def load_vector_file(path: str) -> VocabularyIndex:
    """Load a word2vec-text vector file: header "count dim", then token rows.

    Raises EmbeddingError with the line number on a dimension mismatch.
    Duplicate tokens keep the last occurrence and bump the warning counter.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbeddingError(f"{path}: expected header 'count dim', got {header!r}")
        count, dim = int(header[0]), int(header[1])
        vectors: dict[str, np.ndarray] = {}
        duplicates = 0
        rows = 0
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            token = parts[0].lower()
            values = parts[1:]
            if len(values) != dim:
                raise EmbeddingError(
                    f"{path} line {lineno}: expected {dim} values, got {len(values)}"
                )
            if token in vectors:
                duplicates += 1
            vectors[token] = np.asarray([float(v) for v in values], dtype=np.float64)
            rows += 1
        if rows != count:
            raise EmbeddingError(f"{path}: header declares {count} entries, found {rows}")
    return VocabularyIndex(vectors=vectors, dim=dim, source=path, duplicates=duplicates)


def embed_phrase(index: VocabularyIndex, phrase: str) -> np.ndarray | None:
    """Normalized mean of the in-vocabulary token vectors; None if none known."""
    if not phrase or not phrase.strip():
        raise ValueError("phrase must be non-empty")
    known = [index.lookup(token) for token in phrase.lower().split()]
    known = [v for v in known if v is not None]
    if not known:
        return None
    mean = np.mean(known, axis=0)
    norm = float(np.linalg.norm(mean))
    if norm == 0.0:
        # Degenerate cancellation; treat like out-of-vocabulary.
        return None
    return mean / norm


@dataclass
class RemoteEmbedder:
    """HTTP embedding provider with a per-phrase cache.

    Protocol: POST {endpoint}/embed with {"phrases": [...]} returning
    {"dim": d, "vectors": [[...], ...]}. Non-200 responses are retried
    ``max_retries`` times with ``backoff_ms`` linear backoff. Identical
    phrases are served from cache; concurrent requests for the same phrase
    share one in-flight fetch.
    """

    endpoint: str
    max_retries: int = 2
    backoff_ms: int = 50
    timeout: float = 10.0
    dim: int | None = None
    _cache: dict[str, np.ndarray] = field(default_factory=dict)
    _inflight: dict[str, threading.Event] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def embed(self, phrase: str) -> np.ndarray | None:
        return self.embed_batch([phrase])[0]

    def embed_batch(self, phrases: list[str]) -> list[np.ndarray]:
        if not phrases:
            raise ValueError("phrases must be non-empty")
        to_fetch: list[str] = []
        to_wait: list[tuple[str, threading.Event]] = []
        with self._lock:
            for phrase in dict.fromkeys(phrases):
                if phrase in self._cache:
                    continue
                if phrase in self._inflight:
                    to_wait.append((phrase, self._inflight[phrase]))
                else:
                    event = threading.Event()
                    self._inflight[phrase] = event
                    to_fetch.append(phrase)
        if to_fetch:
            try:
                vectors = self._request(to_fetch)
                with self._lock:
                    for phrase, vec in zip(to_fetch, vectors):
                        self._cache[phrase] = vec
            finally:
                with self._lock:
                    for phrase in to_fetch:
                        event = self._inflight.pop(phrase, None)
                        if event is not None:
                            event.set()
        for phrase, event in to_wait:
            event.wait()
        with self._lock:
            missing = [p for p in phrases if p not in self._cache]
            if missing:
                raise EmbeddingError(f"{self.endpoint}: no vector for {missing[0]!r}")
            return [self._cache[p] for p in phrases]

    def _request(self, phrases: list[str]) -> list[np.ndarray]:
        body = json.dumps({"phrases": phrases}).encode("utf-8")
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_ms * attempt / 1000.0)
            try:
                request = urllib.request.Request(
                    self.endpoint.rstrip("/") + "/embed",
                    data=body,
                    headers={"Content-Type": "application/json"},
                )
                with urllib.request.urlopen(request, timeout=self.timeout) as response:
                    payload = json.loads(response.read().decode("utf-8"))
                dim = int(payload["dim"])
                if self.dim is None:
                    self.dim = dim
                elif dim != self.dim:
                    raise EmbeddingError(
                        f"{self.endpoint}: dimension drift, expected {self.dim}, got {dim}"
                    )
                vectors = [np.asarray(v, dtype=np.float64) for v in payload["vectors"]]
                if len(vectors) != len(phrases):
                    raise EmbeddingError(
                        f"{self.endpoint}: expected {len(phrases)} vectors, got {len(vectors)}"
                    )
                for vec in vectors:
                    if vec.shape != (dim,):
                        raise EmbeddingError(f"{self.endpoint}: vector of wrong dimension in response")
                return vectors
            except EmbeddingError:
                raise
            except (urllib.error.URLError, urllib.error.HTTPError, OSError, ValueError, KeyError) as exc:
                last_error = exc
        raise EmbeddingError(
            f"embedding endpoint {self.endpoint} failed after {self.max_retries + 1} attempts: {last_error}"
        )


def remote_embed(embedder: RemoteEmbedder, phrases: list[str]) -> list[np.ndarray]:
    """Order-preserving batch embedding over the remote protocol."""
    return embedder.embed_batch(phrases)
