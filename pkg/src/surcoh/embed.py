"""Embedding-based semantic coherence: mean cosine similarity of adjacent
sentence embeddings, over pluggable embedding providers.

The built-in provider is a hashed term-frequency embedder (feature hashing
with a fixed, documented hash salt), so the whole pipeline runs with no
model download.  A replay provider feeds precomputed vectors, e.g. neural
sentence embeddings, through the identical scoring path.

Utterances with fewer than ``min_sentences`` sentences are skipped, not
scored; skips are returned as markers so callers can account for them.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

from .corpus import Utterance

# salts of the index / sign / fallback hashes; part of the provider contract
_INDEX_SALT = b"surcoh-ix"
_SIGN_SALT = b"surcoh-sg"
_FALLBACK_SALT = b"surcoh-fb"

DEFAULT_DIMENSION = 1 << 20
DEFAULT_MIN_SENTENCES = 3


class EmbeddingError(RuntimeError):
    """An embedding provider failed or broke its contract."""


@dataclass(frozen=True)
class Skip:
    """Marker for an utterance excluded from scoring, with the reason."""

    session_id: str
    utterance_index: int
    reason: str


@dataclass
class CoherenceScore:
    value: float
    pair_similarities: list[float]
    method: str  # "lda" | "embedding"
    provider: str
    session_id: str
    utterance_index: int


@dataclass
class Embedding:
    """Sparse real vector: only nonzero components are stored."""

    dim: int
    weights: dict[int, float]

    def norm(self) -> float:
        return math.sqrt(math.fsum(w * w for w in self.weights.values()))


@runtime_checkable
class EmbeddingProvider(Protocol):
    name: str
    dim: int
    concurrent_safe: bool

    def embed(
        self,
        tokens: Sequence[str],
        session_id: str | None = None,
        utterance_index: int | None = None,
        sentence_index: int | None = None,
    ) -> Embedding: ...


def _hash64(data: bytes, salt: bytes) -> int:
    return int.from_bytes(
        hashlib.blake2b(data, digest_size=8, person=salt.ljust(16, b"\0")).digest(), "big"
    )


def builtin_embed(tokens: Sequence[str], dim: int = DEFAULT_DIMENSION) -> Embedding:
    """Hashed term-frequency embedding, L2-normalized.

    Each token maps to index hash(token) mod dim with a +-1 sign from a
    second hash.  If every contribution cancels, a deterministic fallback
    component derived from the whole sentence is set to 1.
    """
    if not tokens:
        raise ValueError("cannot embed an empty sentence")
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    weights: dict[int, float] = {}
    for token in tokens:
        data = token.encode("utf-8")
        index = _hash64(data, _INDEX_SALT) % dim
        sign = 1.0 if _hash64(data, _SIGN_SALT) & 1 else -1.0
        weights[index] = weights.get(index, 0.0) + sign
    weights = {i: w for i, w in weights.items() if w != 0.0}
    if not weights:
        fallback = _hash64(" ".join(tokens).encode("utf-8"), _FALLBACK_SALT) % dim
        weights = {fallback: 1.0}
    norm = math.sqrt(math.fsum(w * w for w in weights.values()))
    return Embedding(dim=dim, weights={i: w / norm for i, w in sorted(weights.items())})


class HashedBowProvider:
    """Built-in deterministic provider wrapping builtin_embed."""

    concurrent_safe = True

    def __init__(self, dim: int = DEFAULT_DIMENSION):
        self.dim = dim
        self.name = f"hashed-bow-{dim}"

    def embed(self, tokens, session_id=None, utterance_index=None, sentence_index=None):
        return builtin_embed(tokens, self.dim)


class ReplayEmbeddingProvider:
    """Vectors from a sidecar file of
    {"session_id", "utterance_index", "sentence_index", "vector"} JSON lines."""

    concurrent_safe = True
    name = "replay"

    def __init__(self, path: str | Path):
        self.table: dict[tuple[str, int, int], Embedding] = {}
        dim = None
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    key = (
                        str(obj["session_id"]),
                        int(obj["utterance_index"]),
                        int(obj["sentence_index"]),
                    )
                    vector = [float(x) for x in obj["vector"]]
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise EmbeddingError(f"replay vector file line {lineno}: {exc}") from exc
                if dim is None:
                    dim = len(vector)
                elif len(vector) != dim:
                    raise EmbeddingError(
                        f"replay vector file line {lineno}: dimension {len(vector)} != {dim}"
                    )
                self.table[key] = Embedding(
                    dim=dim, weights={i: x for i, x in enumerate(vector) if x != 0.0}
                )
        self.dim = dim if dim is not None else 0

    def embed(self, tokens, session_id=None, utterance_index=None, sentence_index=None):
        key = (session_id, utterance_index, sentence_index)
        if key not in self.table:
            raise EmbeddingError(f"no replay vector for {key}")
        return self.table[key]


def cosine(a: Embedding, b: Embedding) -> float:
    """Cosine similarity; order-independent float sums via fsum."""
    na, nb = a.norm(), b.norm()
    if na == 0.0 or nb == 0.0:
        raise EmbeddingError("zero-norm embedding violates the provider contract")
    if a.weights == b.weights:
        return 1.0
    small, large = (a.weights, b.weights) if len(a.weights) <= len(b.weights) else (
        b.weights,
        a.weights,
    )
    dot = math.fsum(w * large[i] for i, w in small.items() if i in large)
    value = dot / (na * nb)
    return max(-1.0, min(1.0, value))


def embed_coherence(
    provider: EmbeddingProvider,
    utterance: Utterance,
    min_sentences: int = DEFAULT_MIN_SENTENCES,
) -> CoherenceScore | Skip:
    """Mean cosine over adjacent sentence pairs, or a Skip marker."""
    n = len(utterance.sentences)
    if n < min_sentences:
        return Skip(
            session_id=utterance.session_id,
            utterance_index=utterance.utterance_index,
            reason=f"{n} sentence(s), need >= {min_sentences}",
        )
    embeddings = []
    for i, sentence in enumerate(utterance.sentences):
        try:
            emb = provider.embed(
                sentence.tokens,
                session_id=utterance.session_id,
                utterance_index=utterance.utterance_index,
                sentence_index=i,
            )
        except Exception as exc:
            raise EmbeddingError(
                f"provider {provider.name!r} failed on sentence {i} of "
                f"({utterance.session_id}, {utterance.utterance_index}): {exc}"
            ) from exc
        embeddings.append(emb)
    pairs = [cosine(embeddings[i], embeddings[i + 1]) for i in range(len(embeddings) - 1)]
    return CoherenceScore(
        value=math.fsum(pairs) / len(pairs),
        pair_similarities=pairs,
        method="embedding",
        provider=provider.name,
        session_id=utterance.session_id,
        utterance_index=utterance.utterance_index,
    )
