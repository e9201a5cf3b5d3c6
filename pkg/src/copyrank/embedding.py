"""Text embedding providers, the on-disk vector cache, and mean-centering.

Three providers ship: a file-backed table for offline runs and tests, a
generic HTTP JSON provider for real embedding models, and a deterministic
hash provider (seeded hash of the text expanded to a Gaussian vector) for
property tests and synthetic corpora. Provider calls are the dominant cost,
so vectors are written through a content-addressed cache keyed by
(provider_id, normalized text); switching providers never reuses stale
vectors.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    MissingEmbeddingError,
    TransportError,
    ValidationError,
)
from .ingest import normalize_text

CACHE_DIR_ENV = "COPYRANK_CACHE_DIR"


def _freeze(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray
    provider_id: str

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        if self.values.ndim != 1:
            raise ValidationError("embedding must be a 1-D vector")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("embedding contains non-finite entries")

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def as_values(vector) -> np.ndarray:
    """Coerce an EmbeddingVector or plain array to a float ndarray."""
    return np.asarray(getattr(vector, "values", vector), dtype=float)


def stack(vectors: Sequence) -> np.ndarray:
    """Stack vectors into an (n, p) matrix, checking uniform dimension."""
    if len(vectors) == 0:
        raise ValidationError("expected at least one vector")
    rows = [as_values(v) for v in vectors]
    dims = {r.shape[0] for r in rows}
    if len(dims) != 1:
        raise DimensionMismatchError(f"mixed embedding dimensions {sorted(dims)}")
    return np.vstack(rows)


@dataclass(frozen=True)
class CenteringStats:
    mean: np.ndarray
    corpus_size: int
    corpus_tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "mean", _freeze(self.mean))
        if self.corpus_size < 1:
            raise ValidationError("centering corpus must be non-empty")


class EmbeddingProvider(Protocol):
    provider_id: str

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


class FileBackedProvider:
    """Lookup table loaded from JSONL rows {"text": ..., "embedding": [...]}."""

    def __init__(self, path, provider_id: Optional[str] = None):
        path = Path(path)
        self._table: dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                self._table[normalize_text(row["text"])] = np.asarray(
                    row["embedding"], dtype=float
                )
        digest = hashlib.sha256(path.read_bytes()).hexdigest()[:12]
        self.provider_id = provider_id or f"file:{path.name}:{digest}"

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            key = normalize_text(text)
            if key not in self._table:
                raise MissingEmbeddingError(f"no embedding on file for text: {text!r}")
            out.append(self._table[key])
        return out


class HashProvider:
    """Deterministic pseudo-random embeddings: sha256(text) seeds a Gaussian vector."""

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise ValidationError("dim must be positive")
        self.dim = dim
        self.seed = seed
        self.provider_id = f"hash:d{dim}:s{seed}"

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            digest = hashlib.sha256(
                f"{self.seed}|{self.dim}|{normalize_text(text)}".encode()
            ).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            out.append(rng.standard_normal(self.dim))
        return out


class HTTPProvider:
    """POST {"texts": [...]} -> {"embeddings": [[...], ...]} with bounded retries."""

    def __init__(
        self,
        url: str,
        provider_id: Optional[str] = None,
        timeout: float = 30.0,
        max_retries: int = 3,
        retry_wait: float = 0.5,
    ):
        self.url = url
        self.timeout = timeout
        self.max_retries = max_retries
        self.retry_wait = retry_wait
        self.provider_id = provider_id or f"http:{url}"

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        import requests

        last_error = None
        for attempt in range(self.max_retries):
            try:
                resp = requests.post(
                    self.url, json={"texts": list(texts)}, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                time.sleep(self.retry_wait * (attempt + 1))
                continue
            if resp.status_code != 200:
                raise TransportError(
                    f"embedding endpoint {self.url} returned {resp.status_code}"
                )
            payload = resp.json()
            embeddings = payload.get("embeddings")
            if not isinstance(embeddings, list) or len(embeddings) != len(texts):
                raise TransportError(
                    f"embedding endpoint returned {len(embeddings or [])} vectors "
                    f"for {len(texts)} texts"
                )
            return [np.asarray(e, dtype=float) for e in embeddings]
        raise TransportError(
            f"embedding endpoint {self.url} unreachable after "
            f"{self.max_retries} attempts: {last_error}"
        )


class EmbeddingCache:
    """Content-addressed .npy files under a directory; writes are atomic and serialized.

    The COPYRANK_CACHE_DIR environment variable overrides any configured
    path, so deployments can relocate the cache without touching config.
    """

    def __init__(self, directory=None):
        directory = os.environ.get(CACHE_DIR_ENV) or directory
        if directory is None:
            raise ValidationError(
                f"no cache directory given and {CACHE_DIR_ENV} is unset"
            )
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(provider_id: str, text: str) -> str:
        return hashlib.sha256(
            f"{provider_id}\x00{normalize_text(text)}".encode()
        ).hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.npy"

    def get(self, provider_id: str, text: str) -> Optional[np.ndarray]:
        path = self._path(self.key(provider_id, text))
        if not path.exists():
            self.misses += 1
            return None
        self.hits += 1
        return np.load(path)

    def put(self, provider_id: str, text: str, vector: np.ndarray) -> None:
        path = self._path(self.key(provider_id, text))
        with self._write_lock:
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            try:
                with os.fdopen(fd, "wb") as fh:
                    np.save(fh, np.asarray(vector, dtype=np.float64))
                os.replace(tmp, path)
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)


def embed_batch(
    provider: EmbeddingProvider,
    texts: Sequence[str],
    cache: Optional[EmbeddingCache] = None,
    batch_size: int = 64,
) -> list[EmbeddingVector]:
    """Embed texts in input order, reading and writing through the cache."""
    if len(texts) == 0:
        raise ValidationError("embed_batch needs at least one text")
    normalized = [normalize_text(t) for t in texts]
    if any(not t for t in normalized):
        raise ValidationError("cannot embed empty text")

    resolved: list[Optional[np.ndarray]] = [None] * len(normalized)
    pending: dict[str, list[int]] = {}
    for i, text in enumerate(normalized):
        cached = cache.get(provider.provider_id, text) if cache else None
        if cached is not None:
            resolved[i] = cached
        else:
            pending.setdefault(text, []).append(i)

    todo = list(pending)
    for start in range(0, len(todo), batch_size):
        chunk = todo[start : start + batch_size]
        vectors = provider.embed(chunk)
        if len(vectors) != len(chunk):
            raise TransportError(
                f"provider returned {len(vectors)} vectors for {len(chunk)} texts"
            )
        for text, vec in zip(chunk, vectors):
            vec = np.asarray(vec, dtype=np.float64)
            if cache:
                cache.put(provider.provider_id, text, vec)
            for i in pending[text]:
                resolved[i] = vec

    dims = {v.shape[0] for v in resolved}
    if len(dims) != 1:
        raise DimensionMismatchError(
            f"provider {provider.provider_id} returned mixed dimensions {sorted(dims)}"
        )
    return [EmbeddingVector(v, provider.provider_id) for v in resolved]


def fit_centering(corpus: Sequence, corpus_tag: str = "") -> CenteringStats:
    """Arithmetic mean of the corpus embeddings."""
    matrix = stack(corpus)
    return CenteringStats(
        mean=matrix.mean(axis=0), corpus_size=matrix.shape[0], corpus_tag=corpus_tag
    )


def center(vector, stats: CenteringStats) -> EmbeddingVector:
    """Subtract the corpus mean elementwise."""
    values = as_values(vector)
    if values.shape != stats.mean.shape:
        raise DimensionMismatchError(
            f"vector dim {values.shape[0]} vs centering mean dim {stats.mean.shape[0]}"
        )
    provider_id = getattr(vector, "provider_id", "")
    return EmbeddingVector(values - stats.mean, provider_id)


def center_matrix(matrix: np.ndarray, stats: CenteringStats) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape[-1] != stats.mean.shape[0]:
        raise DimensionMismatchError(
            f"matrix dim {matrix.shape[-1]} vs centering mean dim {stats.mean.shape[0]}"
        )
    return matrix - stats.mean
