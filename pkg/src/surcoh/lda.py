"""Latent Dirichlet allocation via collapsed Gibbs sampling, and the
topic-based semantic coherence of an utterance (mean cosine similarity of
adjacent sentence topic distributions).

Training uses the standard collapsed conditional, proportional to
(n_dk + alpha) * (n_kw + beta) / (n_k + V*beta), with one sequential chain
per seed.  Fold-in inference freezes the topic-word matrix and resamples
assignments with Gumbel-max draws whose random keys derive from the seed
and a fingerprint of each topic's row, not from the topic's index; a
consistent permutation of the topic rows therefore permutes every
inference result exactly and leaves coherence values bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import Utterance
from .embed import CoherenceScore, Skip

_FORMAT = "surcoh-lda"
_VERSION = 1

DEFAULT_TOPICS = 20
DEFAULT_BETA = 0.01
DEFAULT_ITERATIONS = 1000
DEFAULT_FOLD_IN_ITERATIONS = 100
DEFAULT_SEED = 7


class UnscorableSegment(ValueError):
    """No token of the segment is in the model vocabulary."""


class ModelFormatError(ValueError):
    """Unreadable topic-model payload."""


@dataclass
class TopicModel:
    k: int
    alpha: float
    beta: float
    phi: np.ndarray  # k x V topic-word probabilities
    vocabulary: list[str]
    iterations: int
    seed: int
    _log_phi: np.ndarray | None = field(default=None, repr=False)
    _index: dict[str, int] | None = field(default=None, repr=False)

    def vocab_index(self) -> dict[str, int]:
        if self._index is None:
            self._index = {w: i for i, w in enumerate(self.vocabulary)}
        return self._index

    def log_phi(self) -> np.ndarray:
        if self._log_phi is None:
            self._log_phi = np.log(self.phi)
        return self._log_phi

    def row_fingerprints(self) -> list[int]:
        """Content hash per topic row; stable under row permutation."""
        return [
            int.from_bytes(
                hashlib.blake2b(
                    np.ascontiguousarray(self.phi[k]).tobytes(), digest_size=8
                ).digest(),
                "big",
            )
            for k in range(self.k)
        ]


@dataclass
class TopicDistribution:
    theta: np.ndarray


def default_alpha(k: int) -> float:
    return 50.0 / k


def train_lda(
    documents: Iterable[Sequence[str]],
    k: int = DEFAULT_TOPICS,
    alpha: float | None = None,
    beta: float = DEFAULT_BETA,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = DEFAULT_SEED,
) -> TopicModel:
    """Collapsed Gibbs sampling over token-topic assignments.

    Deterministic given the seed: one uniform stream drives initialization
    and every sweep in document order.
    """
    docs = [list(d) for d in documents]
    if not docs:
        raise ValueError("no documents to train on")
    if any(not d for d in docs):
        raise ValueError("documents must be non-empty")
    if k < 1:
        raise ValueError("topic count must be >= 1")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    vocabulary = sorted({tok for doc in docs for tok in doc})
    if not vocabulary:
        raise ValueError("empty vocabulary")
    index = {w: i for i, w in enumerate(vocabulary)}
    nvocab = len(vocabulary)
    total_tokens = sum(len(d) for d in docs)
    if k > total_tokens:
        raise ValueError(f"topic count {k} exceeds total token count {total_tokens}")
    if alpha is None:
        alpha = default_alpha(k)
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")

    word_ids = [[index[tok] for tok in doc] for doc in docs]
    rng = np.random.default_rng(seed)

    n_dk = [[0] * k for _ in docs]
    n_kw = [[0] * nvocab for _ in range(k)]
    n_k = [0] * k
    assignments = []
    init = rng.integers(0, k, size=total_tokens)
    pos = 0
    for d, ids in enumerate(word_ids):
        z_doc = []
        for w in ids:
            topic = int(init[pos])
            pos += 1
            z_doc.append(topic)
            n_dk[d][topic] += 1
            n_kw[topic][w] += 1
            n_k[topic] += 1
        assignments.append(z_doc)

    vbeta = nvocab * beta
    for _ in range(iterations):
        uniforms = rng.random(total_tokens)
        pos = 0
        for d, ids in enumerate(word_ids):
            row = n_dk[d]
            z_doc = assignments[d]
            for t, w in enumerate(ids):
                old = z_doc[t]
                row[old] -= 1
                n_kw[old][w] -= 1
                n_k[old] -= 1
                total = 0.0
                cumulative = []
                for topic in range(k):
                    total += (
                        (row[topic] + alpha)
                        * (n_kw[topic][w] + beta)
                        / (n_k[topic] + vbeta)
                    )
                    cumulative.append(total)
                u = uniforms[pos] * total
                pos += 1
                new = 0
                while cumulative[new] <= u and new < k - 1:
                    new += 1
                z_doc[t] = new
                row[new] += 1
                n_kw[new][w] += 1
                n_k[new] += 1

    phi = np.empty((k, nvocab), dtype=np.float64)
    for topic in range(k):
        denom = n_k[topic] + vbeta
        for w in range(nvocab):
            phi[topic, w] = (n_kw[topic][w] + beta) / denom

    return TopicModel(
        k=k,
        alpha=alpha,
        beta=beta,
        phi=phi,
        vocabulary=vocabulary,
        iterations=iterations,
        seed=seed,
    )


def _gumbel_streams(model: TopicModel, seed: int, steps: int, tokens: int) -> np.ndarray:
    """One Gumbel stream per topic, keyed by topic-row content, not index."""
    streams = np.empty((model.k, steps, tokens), dtype=np.float64)
    for topic, fingerprint in enumerate(model.row_fingerprints()):
        rng = np.random.default_rng(np.random.SeedSequence([seed, fingerprint]))
        streams[topic] = rng.gumbel(size=(steps, tokens))
    return streams


def infer_topics(
    model: TopicModel,
    segment: Sequence[str],
    fold_in_iterations: int = DEFAULT_FOLD_IN_ITERATIONS,
    seed: int = DEFAULT_SEED,
) -> TopicDistribution:
    """Fold-in Gibbs with the topic-word matrix frozen.

    Every conditional draw is a Gumbel-max categorical sample, so theta is
    a deterministic function of (model content, segment, seed).
    """
    # sorted ids: the model is bag-of-words, so identical token multisets
    # must infer identical distributions regardless of word order
    index = model.vocab_index()
    ids = sorted(index[tok] for tok in segment if tok in index)
    if not ids:
        raise UnscorableSegment("segment has no in-vocabulary tokens")
    if fold_in_iterations < 1:
        raise ValueError("fold_in_iterations must be >= 1")
    k, alpha = model.k, model.alpha
    log_phi = model.log_phi()
    streams = _gumbel_streams(model, seed, fold_in_iterations + 1, len(ids))

    n_k = np.zeros(k, dtype=np.float64)
    z = []
    for t, w in enumerate(ids):
        scores = log_phi[:, w] + np.log(n_k + alpha) + streams[:, 0, t]
        best = int(np.argmax(scores))
        z.append(best)
        n_k[best] += 1.0
    for it in range(1, fold_in_iterations + 1):
        for t, w in enumerate(ids):
            n_k[z[t]] -= 1.0
            scores = log_phi[:, w] + np.log(n_k + alpha) + streams[:, it, t]
            best = int(np.argmax(scores))
            z[t] = best
            n_k[best] += 1.0

    theta = (n_k + alpha) / (len(ids) + k * alpha)
    return TopicDistribution(theta=theta)


def theta_cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two topic distributions, clamped into [0, 1]."""
    if np.array_equal(a, b):
        return 1.0
    dot = math.fsum(float(x) * float(y) for x, y in zip(a, b))
    na = math.sqrt(math.fsum(float(x) * float(x) for x in a))
    nb = math.sqrt(math.fsum(float(y) * float(y) for y in b))
    return max(0.0, min(1.0, dot / (na * nb)))


def coherence_from_thetas(thetas: Sequence[np.ndarray]) -> tuple[float, list[float]]:
    pairs = [theta_cosine(thetas[i], thetas[i + 1]) for i in range(len(thetas) - 1)]
    return math.fsum(pairs) / len(pairs), pairs


def lda_coherence(
    model: TopicModel,
    utterance: Utterance,
    min_sentences: int = 3,
    fold_in_iterations: int = DEFAULT_FOLD_IN_ITERATIONS,
    seed: int = DEFAULT_SEED,
) -> CoherenceScore | Skip:
    """Mean cosine over adjacent sentence topic distributions, or Skip."""
    n = len(utterance.sentences)
    if n < min_sentences:
        return Skip(
            session_id=utterance.session_id,
            utterance_index=utterance.utterance_index,
            reason=f"{n} sentence(s), need >= {min_sentences}",
        )
    thetas = []
    for sentence in utterance.sentences:
        try:
            dist = infer_topics(model, sentence.tokens, fold_in_iterations, seed)
        except UnscorableSegment:
            return Skip(
                session_id=utterance.session_id,
                utterance_index=utterance.utterance_index,
                reason="sentence with no in-vocabulary tokens",
            )
        thetas.append(dist.theta)
    value, pairs = coherence_from_thetas(thetas)
    return CoherenceScore(
        value=value,
        pair_similarities=pairs,
        method="lda",
        provider=f"lda-k{model.k}",
        session_id=utterance.session_id,
        utterance_index=utterance.utterance_index,
    )


def serialize(model: TopicModel) -> bytes:
    doc = {
        "format": _FORMAT,
        "version": _VERSION,
        "k": model.k,
        "alpha": model.alpha,
        "beta": model.beta,
        "iterations": model.iterations,
        "seed": model.seed,
        "vocabulary": model.vocabulary,
        "phi": [[float(x) for x in row] for row in model.phi],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
        "utf-8"
    )


def deserialize(payload: bytes) -> TopicModel:
    try:
        doc = json.loads(payload.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ModelFormatError(f"model payload is not UTF-8 at offset {exc.start}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupt model payload at offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("format") != _FORMAT:
        raise ModelFormatError("payload is not a surcoh topic model")
    if doc.get("version") != _VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
    try:
        phi = np.array(doc["phi"], dtype=np.float64)
        model = TopicModel(
            k=int(doc["k"]),
            alpha=float(doc["alpha"]),
            beta=float(doc["beta"]),
            phi=phi,
            vocabulary=[str(w) for w in doc["vocabulary"]],
            iterations=int(doc["iterations"]),
            seed=int(doc["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"invalid model payload: {exc}") from exc
    if model.phi.shape != (model.k, len(model.vocabulary)):
        raise ModelFormatError("phi shape does not match k and vocabulary")
    return model


def save(model: TopicModel, path) -> None:
    with open(path, "wb") as handle:
        handle.write(serialize(model))


def load(path) -> TopicModel:
    with open(path, "rb") as handle:
        return deserialize(handle.read())
