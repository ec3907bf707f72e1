"""Reference token-probability provider: an n-gram model with MLE or
interpolated Kneser-Ney smoothing.

Counting rule: each training sentence is padded with (order-1) start marks
and one end mark, then every k-gram window of the padded sequence is
counted, for k = 1..order.  Natural log throughout.

Kneser-Ney uses a single absolute discount.  A query with a context of
length order-1 is answered from raw counts; shorter contexts are answered
from the continuation-count distributions the interpolation recurses
through, ending in a unigram continuation distribution interpolated with
the uniform distribution over the vocabulary.  Every distribution sums to
one over the vocabulary by construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

UNK = "<unk>"
BOS = "<s>"
EOS = "</s>"

_FORMAT = "surcoh-ngram"
_VERSION = 1

DEFAULT_ORDER = 3
DEFAULT_DISCOUNT = 0.75
DEFAULT_MIN_COUNT = 2


class ZeroProbabilityError(ValueError):
    """MLE assigns probability zero; callers need Kneser-Ney for open text."""


class ModelFormatError(ValueError):
    """Unreadable model payload; the message carries the byte offset."""


@dataclass
class NgramModel:
    order: int
    discount: float
    min_count: int
    smoothing: str  # "mle" | "kneser_ney"
    vocabulary: frozenset[str]
    counts: dict[tuple[str, ...], int]

    # derived lookup tables, built once; the model is immutable afterwards
    _follow_sum: dict[tuple[str, ...], int] = field(default_factory=dict, repr=False)
    _distinct_follow: dict[tuple[str, ...], int] = field(default_factory=dict, repr=False)
    _cont: dict[tuple[str, ...], int] = field(default_factory=dict, repr=False)
    _cont_follow_sum: dict[tuple[str, ...], int] = field(default_factory=dict, repr=False)
    _cont_distinct_follow: dict[tuple[str, ...], int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must lie in (0,1)")
        if self.min_count < 1:
            raise ValueError("min_count must be >= 1")
        if self.smoothing not in ("mle", "kneser_ney"):
            raise ValueError(f"unknown smoothing {self.smoothing!r}")
        for gram, count in self.counts.items():
            if count < 1:
                raise ValueError(f"count for {gram} must be >= 1")
            for tok in gram:
                if tok not in self.vocabulary:
                    raise ValueError(f"gram token {tok!r} missing from vocabulary")
        self._build_tables()

    def _build_tables(self):
        follow_sum: dict[tuple[str, ...], int] = {}
        distinct: dict[tuple[str, ...], int] = {}
        left_ext: dict[tuple[str, ...], set[str]] = {}
        for gram, count in self.counts.items():
            ctx = gram[:-1]
            follow_sum[ctx] = follow_sum.get(ctx, 0) + count
            distinct[ctx] = distinct.get(ctx, 0) + 1
            if len(gram) >= 2:
                left_ext.setdefault(gram[1:], set()).add(gram[0])
        cont = {gram: len(lefts) for gram, lefts in left_ext.items()}
        cont_follow_sum: dict[tuple[str, ...], int] = {}
        cont_distinct: dict[tuple[str, ...], int] = {}
        for gram, c in cont.items():
            ctx = gram[:-1]
            cont_follow_sum[ctx] = cont_follow_sum.get(ctx, 0) + c
            cont_distinct[ctx] = cont_distinct.get(ctx, 0) + 1
        self._follow_sum = follow_sum
        self._distinct_follow = distinct
        self._cont = cont
        self._cont_follow_sum = cont_follow_sum
        self._cont_distinct_follow = cont_distinct

    def map_token(self, token: str) -> str:
        return token if token in self.vocabulary else UNK

    def _prob_top(self, ctx: tuple[str, ...], target: str) -> float:
        denom = self._follow_sum.get(ctx, 0)
        if denom == 0:
            return self._prob_lower_of(ctx, target)
        count = self.counts.get(ctx + (target,), 0)
        reserved = self.discount * self._distinct_follow[ctx]
        lower = self._prob_lower_of(ctx, target)
        return (max(count - self.discount, 0.0) + reserved * lower) / denom

    def _prob_lower_of(self, ctx: tuple[str, ...], target: str) -> float:
        if not ctx:  # only reachable for order-1 models
            return 1.0 / len(self.vocabulary)
        return self._prob_cont(ctx[1:], target)

    def _prob_cont(self, ctx: tuple[str, ...], target: str) -> float:
        denom = self._cont_follow_sum.get(ctx, 0)
        if denom == 0:
            if not ctx:
                raise ZeroProbabilityError("model has no bigrams to smooth from")
            return self._prob_cont(ctx[1:], target)
        count = self._cont.get(ctx + (target,), 0)
        reserved = self.discount * self._cont_distinct_follow[ctx]
        if ctx:
            lower = self._prob_cont(ctx[1:], target)
        else:
            lower = 1.0 / len(self.vocabulary)
        return (max(count - self.discount, 0.0) + reserved * lower) / denom

    def prob(self, context: Sequence[str], target: str) -> float:
        """P(target | context) under the model's smoothing mode."""
        target = self.map_token(target)
        ctx = tuple(self.map_token(t) for t in context[max(0, len(context) - self.order + 1):])
        if self.smoothing == "mle":
            denom = self._follow_sum.get(ctx, 0)
            count = self.counts.get(ctx + (target,), 0)
            if count == 0 or denom == 0:
                raise ZeroProbabilityError(
                    f"MLE probability of {target!r} after {ctx} is zero"
                )
            return count / denom
        if len(ctx) == self.order - 1:
            return self._prob_top(ctx, target)
        return self._prob_cont(ctx, target)


def log_prob(model: NgramModel, context: Sequence[str], target: str) -> float:
    """Natural-log P(target | context); raises ZeroProbabilityError in MLE
    mode when the event was never observed."""
    return math.log(model.prob(context, target))


def pad_sentence(tokens: Sequence[str], order: int) -> list[str]:
    return [BOS] * (order - 1) + list(tokens) + [EOS]


def train(
    sentences: Iterable[Sequence[str]],
    order: int = DEFAULT_ORDER,
    discount: float = DEFAULT_DISCOUNT,
    min_count: int = DEFAULT_MIN_COUNT,
    smoothing: str = "kneser_ney",
) -> NgramModel:
    """Count all k-grams (k <= order) of the padded sentences.

    Tokens rarer than min_count are replaced by the unknown mark before
    counting, so the model always has a live unknown-word path.
    """
    sentences = [list(s) for s in sentences]
    if not sentences:
        raise ValueError("training corpus is empty")
    if order < 1:
        raise ValueError("order must be >= 1")
    freq: dict[str, int] = {}
    for sent in sentences:
        if not sent:
            raise ValueError("training sentences must be non-empty")
        for tok in sent:
            if not tok or any(ch.isspace() for ch in tok):
                raise ValueError(f"invalid token {tok!r}: empty or contains whitespace")
            freq[tok] = freq.get(tok, 0) + 1

    def mapped(tok: str) -> str:
        return tok if freq[tok] >= min_count else UNK

    vocabulary = {UNK, BOS, EOS}
    vocabulary.update(mapped(tok) for tok in freq)

    counts: dict[tuple[str, ...], int] = {}
    for sent in sentences:
        padded = pad_sentence([mapped(t) for t in sent], order)
        n = len(padded)
        for k in range(1, order + 1):
            for i in range(n - k + 1):
                gram = tuple(padded[i : i + k])
                counts[gram] = counts.get(gram, 0) + 1

    return NgramModel(
        order=order,
        discount=discount,
        min_count=min_count,
        smoothing=smoothing,
        vocabulary=frozenset(vocabulary),
        counts=counts,
    )


def serialize(model: NgramModel) -> bytes:
    """Deterministic UTF-8 payload; equal models serialize byte-identically."""
    doc = {
        "format": _FORMAT,
        "version": _VERSION,
        "order": model.order,
        "discount": model.discount,
        "min_count": model.min_count,
        "smoothing": model.smoothing,
        "vocabulary": sorted(model.vocabulary),
        "counts": {" ".join(gram): count for gram, count in model.counts.items()},
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
        "utf-8"
    )


def deserialize(payload: bytes) -> NgramModel:
    try:
        doc = json.loads(payload.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ModelFormatError(f"model payload is not UTF-8 at offset {exc.start}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupt model payload at offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("format") != _FORMAT:
        raise ModelFormatError("payload is not a surcoh n-gram model")
    if doc.get("version") != _VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
    try:
        counts = {tuple(key.split(" ")): int(v) for key, v in doc["counts"].items()}
        model = NgramModel(
            order=int(doc["order"]),
            discount=float(doc["discount"]),
            min_count=int(doc["min_count"]),
            smoothing=str(doc["smoothing"]),
            vocabulary=frozenset(doc["vocabulary"]),
            counts=counts,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"invalid model payload: {exc}") from exc
    return model


def save(model: NgramModel, path) -> None:
    with open(path, "wb") as handle:
        handle.write(serialize(model))


def load(path) -> NgramModel:
    with open(path, "rb") as handle:
        return deserialize(handle.read())
