"""Embedding providers: HTTP service, precomputed file, and a hash stub.

Replay selection only needs vectors from somewhere; these backends make
"somewhere" pluggable so the planner runs with or without a live model.
"""

from __future__ import annotations

import hashlib
import logging
import random
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .errors import ProviderError
from .io import read_jsonl

logger = logging.getLogger(__name__)


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


class HttpEmbeddingProvider:
    """Client for the embedding service's POST /embed contract."""

    def __init__(
        self,
        base_url: str,
        *,
        normalize: bool = True,
        batch_size: int = 256,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.normalize = normalize
        self.batch_size = batch_size
        self.timeout = timeout
        self._client = httpx.Client(transport=transport) if transport else httpx.Client()

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        vectors: list[list[float]] = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start : start + self.batch_size])
            try:
                response = self._client.post(
                    f"{self.base_url}/embed",
                    json={"texts": batch, "normalize": self.normalize},
                    timeout=self.timeout,
                )
                response.raise_for_status()
                payload = response.json()
            except httpx.HTTPError as exc:
                raise ProviderError(f"embedding request failed: {exc}") from exc
            got = payload.get("embeddings")
            if not isinstance(got, list) or len(got) != len(batch):
                raise ProviderError("embedding response does not align with request")
            vectors.extend(got)
        return vectors

    def close(self) -> None:
        self._client.close()


class HashEmbeddingProvider:
    """Deterministic pseudo-embeddings derived from text content.

    No semantic meaning; exists so every pipeline path that needs vectors
    can run with zero models and zero network. Equal texts map to equal
    vectors, which is all the selection algebra requires of a stub.
    """

    def __init__(self, dim: int = 16):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            rng = random.Random(int.from_bytes(digest[:8], "big"))
            vector = [rng.uniform(-1.0, 1.0) for _ in range(self.dim)]
            if all(v == 0.0 for v in vector):
                vector[0] = 1.0
            out.append(vector)
        return out


class StaticEmbeddingProvider:
    """Exact text-to-vector map for tests; unknown text is an error."""

    def __init__(self, table: dict[str, list[float]]):
        self.table = dict(table)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        missing = [t for t in texts if t not in self.table]
        if missing:
            raise ProviderError(f"no vector for {missing[0]!r}")
        return [list(self.table[t]) for t in texts]


class FileEmbeddingStore:
    """Precomputed id-to-vector store read from embeddings.jsonl."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.vectors: dict[str, list[float]] = {}
        for record in read_jsonl(self.path):
            self.vectors[record["id"]] = [float(v) for v in record["vector"]]

    def vector_for(self, item_id: str) -> list[float]:
        try:
            return self.vectors[item_id]
        except KeyError:
            raise ProviderError(f"no stored vector for id {item_id!r}") from None

    def vectors_for(self, ids: Sequence[str]) -> list[list[float]]:
        return [self.vector_for(item_id) for item_id in ids]
