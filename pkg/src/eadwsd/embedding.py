"""Text-embedding backends and vector similarity.

Two backends share one call surface: a remote embeddings endpoint (JSON POST
``{"model": ..., "input": [...]}``, the de-facto embeddings-API shape) and a
deterministic offline backend that derives vectors from a cryptographic hash
of the text.  The offline backend makes every pipeline stage testable without
network or model weights; it makes no semantic claims.

All similarity arithmetic is double precision.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .errors import ConfigError, EmbeddingContractError, EmbeddingError, EmbeddingTransportError

API_KEY_ENV = "EADWSD_EMBED_API_KEY"

RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise EmbeddingError("empty vector")
        if any(not math.isfinite(v) for v in self.values):
            raise EmbeddingError("vector contains non-finite values")

    @property
    def dim(self) -> int:
        return len(self.values)

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))


def l2_normalize(values: Sequence[float]) -> tuple[float, ...]:
    norm = math.sqrt(sum(v * v for v in values))
    if norm == 0.0:
        raise EmbeddingError("cannot normalize an all-zero vector")
    return tuple(v / norm for v in values)


def cosine(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """dot(u,v)/(|u||v|), clamped to [-1, 1] against rounding overshoot."""
    if u.dim != v.dim:
        raise EmbeddingError(f"dimension mismatch: {u.dim} vs {v.dim}")
    nu, nv = u.norm(), v.norm()
    if nu == 0.0 or nv == 0.0:
        raise EmbeddingError("cosine undefined for a zero vector")
    dot = sum(a * b for a, b in zip(u.values, v.values))
    return max(-1.0, min(1.0, dot / (nu * nv)))


def deterministic_embed(text: str, dim: int) -> EmbeddingVector:
    """Hash-derived vector: stable across runs, platforms, and processes.

    Each component j comes from the first 8 bytes of
    sha256(lowercase_text || 0x00 || j), mapped into [-1, 1), then the
    whole vector is L2-normalized.
    """
    if dim < 2:
        raise EmbeddingError("deterministic backend requires dim >= 2")
    lowered = text.lower()
    raw: list[float] = []
    for j in range(dim):
        digest = hashlib.sha256(f"{lowered}\x00{j}".encode("utf-8")).digest()
        u = int.from_bytes(digest[:8], "big")
        raw.append(u / 2.0**63 - 1.0)
    if all(v == 0.0 for v in raw):  # vanishing probability; keep the contract total
        raw[0] = 1.0
    return EmbeddingVector(values=l2_normalize(raw))


@dataclass(frozen=True)
class EmbeddingBackendConfig:
    kind: str  # "remote" | "deterministic_offline"
    dim: int
    endpoint_url: str | None = None
    path: str = "/v1/embeddings"
    model_name: str | None = None
    normalize: bool = True
    cache_path: str | None = None
    max_attempts: int = 3
    backoff_initial_ms: int = 500
    timeout_s: float = 60.0

    def __post_init__(self) -> None:
        if self.kind not in ("remote", "deterministic_offline"):
            raise ConfigError(f"unknown embedding backend kind: {self.kind!r}")
        if self.kind == "remote" and not self.endpoint_url:
            raise ConfigError("remote embedding backend requires endpoint_url")
        if self.dim < 1:
            raise ConfigError("embedding dim must be positive")

    @property
    def cache_model_key(self) -> str:
        if self.kind == "remote":
            return self.model_name or "remote"
        return f"deterministic-{self.dim}"


class Embedder(Protocol):
    """Anything that maps texts to order-aligned vectors (duck-typed seam)."""

    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


class _VectorCache:
    """Append-only JSONL cache of ``{"model", "text_sha256", "vector"}``.

    Reads are lock-free after load; writes are serialized.  A cache hit
    returns the stored floats bit-identically.
    """

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()
        self._store: dict[tuple[str, str], tuple[float, ...]] = {}
        if path.exists():
            with path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    obj = json.loads(line)
                    self._store[(obj["model"], obj["text_sha256"])] = tuple(obj["vector"])

    def get(self, model: str, text: str) -> tuple[float, ...] | None:
        return self._store.get((model, _sha256(text)))

    def put(self, model: str, text: str, vector: tuple[float, ...]) -> None:
        key = (model, _sha256(text))
        with self._lock:
            if key in self._store:
                return
            self._store[key] = vector
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(
                    json.dumps(
                        {"model": model, "text_sha256": key[1], "vector": list(vector)}
                    )
                    + "\n"
                )


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


_caches: dict[str, _VectorCache] = {}
_caches_lock = threading.Lock()


def _cache_for(path: str) -> _VectorCache:
    resolved = str(Path(path).resolve())
    with _caches_lock:
        cache = _caches.get(resolved)
        if cache is None:
            cache = _VectorCache(Path(resolved))
            _caches[resolved] = cache
        return cache


def _remote_embed(
    texts: Sequence[str], cfg: EmbeddingBackendConfig, client: httpx.Client | None = None
) -> list[list[float]]:
    url = cfg.endpoint_url.rstrip("/") + cfg.path
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(API_KEY_ENV)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    payload = {"model": cfg.model_name or "", "input": list(texts)}
    owned = client is None
    if owned:
        client = httpx.Client(timeout=cfg.timeout_s)
    last_status: int | None = None
    try:
        for attempt in range(1, cfg.max_attempts + 1):
            try:
                response = client.post(url, headers=headers, json=payload)
            except httpx.HTTPError as exc:
                last_status = None
                if attempt == cfg.max_attempts:
                    raise EmbeddingTransportError(
                        f"transport failure after {attempt} attempts: {exc}",
                        status=None,
                        attempts=attempt,
                    ) from exc
            else:
                last_status = response.status_code
                if response.status_code == 200:
                    return _parse_embedding_body(response, len(texts), cfg)
                if response.status_code not in RETRYABLE_STATUSES:
                    raise EmbeddingTransportError(
                        f"embedding endpoint returned {response.status_code}",
                        status=response.status_code,
                        attempts=attempt,
                    )
                if attempt == cfg.max_attempts:
                    raise EmbeddingTransportError(
                        f"embedding endpoint returned {response.status_code}"
                        f" after {attempt} attempts",
                        status=response.status_code,
                        attempts=attempt,
                    )
            time.sleep(cfg.backoff_initial_ms / 1000.0 * 2 ** (attempt - 1))
    finally:
        if owned:
            client.close()
    raise EmbeddingTransportError("unreachable retry exit", status=last_status)


def _parse_embedding_body(
    response: httpx.Response, expected: int, cfg: EmbeddingBackendConfig
) -> list[list[float]]:
    try:
        body = response.json()
        data = body["data"]
        rows = sorted(data, key=lambda item: item.get("index", 0))
        vectors = [[float(x) for x in row["embedding"]] for row in rows]
    except (KeyError, TypeError, ValueError) as exc:
        raise EmbeddingContractError(f"malformed embeddings response: {exc}") from exc
    if len(vectors) != expected:
        raise EmbeddingContractError(
            f"response carries {len(vectors)} vectors for {expected} inputs"
        )
    for vector in vectors:
        if len(vector) != cfg.dim:
            raise EmbeddingContractError(
                f"vector dimension {len(vector)} does not match configured dim {cfg.dim}"
            )
    return vectors


def embed(
    texts: Sequence[str],
    cfg: EmbeddingBackendConfig,
    client: httpx.Client | None = None,
) -> list[EmbeddingVector]:
    """One vector per text, order-aligned; cached by (backend, model, text)."""
    if not texts:
        raise EmbeddingError("embed requires at least one text")
    for text in texts:
        if not text.strip():
            raise EmbeddingError("embed requires non-empty texts")

    cache = _cache_for(cfg.cache_path) if cfg.cache_path else None
    results: list[tuple[float, ...] | None] = [None] * len(texts)
    missing: list[int] = []
    for i, text in enumerate(texts):
        if cache is not None:
            hit = cache.get(cfg.cache_model_key, text)
            if hit is not None:
                results[i] = hit
                continue
        missing.append(i)

    if missing:
        if cfg.kind == "deterministic_offline":
            fresh = [deterministic_embed(texts[i], cfg.dim).values for i in missing]
        else:
            raw = _remote_embed([texts[i] for i in missing], cfg, client=client)
            fresh = [l2_normalize(v) if cfg.normalize else tuple(v) for v in raw]
        for i, vector in zip(missing, fresh):
            results[i] = vector
            if cache is not None:
                cache.put(cfg.cache_model_key, texts[i], vector)

    return [EmbeddingVector(values=v) for v in results]  # type: ignore[arg-type]


@dataclass
class ConfigEmbedder:
    """Adapter giving an :class:`EmbeddingBackendConfig` the Embedder surface."""

    cfg: EmbeddingBackendConfig
    client: httpx.Client | None = field(default=None, repr=False)

    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return embed(texts, self.cfg, client=self.client)


def as_embedder(backend: EmbeddingBackendConfig | Embedder) -> Embedder:
    if isinstance(backend, EmbeddingBackendConfig):
        return ConfigEmbedder(backend)
    return backend
