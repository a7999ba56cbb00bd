"""Encoders behind the HTTP surface.

The service needs exactly two things from a backend: a fixed output
dimension and "texts in, one vector per text out". Model names of the
form hash-<dim> select a deterministic, dependency-free encoder meant
for development and CI; any other name is treated as a
sentence-transformers checkpoint.
"""

from __future__ import annotations

import hashlib
import math
import re
from typing import Protocol, Sequence

_HASH_TAG = re.compile(r"^hash-(\d+)$")


class Backend(Protocol):
    model: str
    dim: int

    def encode(self, texts: Sequence[str]) -> list[list[float]]: ...


class HashBackend:
    """Character-trigram feature hashing.

    Carries no semantics. What it does guarantee: equal texts map to
    equal vectors, every vector has the configured dimension, and no
    vector is zero, which is all the service contract asks for when
    real model weights are unavailable.
    """

    def __init__(self, dim: int, model: str | None = None):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.model = model or f"hash-{dim}"

    def encode(self, texts: Sequence[str]) -> list[list[float]]:
        return [self._one(text) for text in texts]

    def _one(self, text: str) -> list[float]:
        vector = [0.0] * self.dim
        # Sentinel padding so even a single character yields a trigram.
        padded = f"\x00{text}\x00"
        for i in range(len(padded) - 2):
            gram = padded[i : i + 3].encode("utf-8")
            value = int.from_bytes(hashlib.blake2b(gram, digest_size=8).digest(), "big")
            sign = 1.0 if value & 1 else -1.0
            vector[(value >> 1) % self.dim] += sign
        if not any(vector):
            # Opposite-signed grams can cancel pairwise; keep the vector usable.
            vector[0] = 1.0
        return vector


class SentenceTransformerBackend:
    """Pretrained sentence encoder; the import is deferred so hash-<dim>
    deployments never pay for it."""

    def __init__(self, model: str, device: str = "cpu", encode_batch_size: int = 32):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise RuntimeError(
                f"model {model!r} needs sentence-transformers; install the "
                "'model' extra or pick a hash-<dim> model"
            ) from exc
        self.model = model
        self._encoder = SentenceTransformer(model, device=device)
        self._encode_batch_size = encode_batch_size
        self.dim = int(self._encoder.get_sentence_embedding_dimension())

    def encode(self, texts: Sequence[str]) -> list[list[float]]:
        rows = self._encoder.encode(
            list(texts),
            batch_size=self._encode_batch_size,
            convert_to_numpy=True,
            show_progress_bar=False,
        )
        return [[float(value) for value in row] for row in rows]


def load_backend(model: str, device: str = "cpu") -> Backend:
    tag = _HASH_TAG.match(model)
    if tag:
        return HashBackend(int(tag.group(1)))
    return SentenceTransformerBackend(model, device=device)


def unit(vector: Sequence[float]) -> list[float]:
    norm = math.sqrt(math.fsum(value * value for value in vector))
    if norm == 0.0:
        raise ValueError("zero vector cannot be normalized")
    return [value / norm for value in vector]
