"""Word-level surprisal (-log P(word | preceding words)) and its sums.

Context resets at utterance boundaries: the context for a word is every
preceding word of the same utterance, crossing sentence boundaries.  The
provider decides how to represent those boundaries; the built-in n-gram
provider treats the utterance as one flat word stream padded with start
marks, an external bridge joins the words with spaces.

Sentence scores are the sum of their word scores and the utterance score
is the sum of the sentence scores, in that association, so the additivity
chain holds exactly in floating point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence, runtime_checkable

from .corpus import Utterance
from .lm import BOS, NgramModel
from .lm import log_prob as lm_log_prob


class ProviderError(RuntimeError):
    """A token-probability provider failed; the message names the provider."""


@runtime_checkable
class TokenProbabilityProvider(Protocol):
    """Contract: natural-log P(target | context), finite and <= 0."""

    name: str
    log_base: str  # must be "natural"
    max_context: int | None  # None = unlimited
    concurrent_safe: bool

    def log_prob(self, context: Sequence[str], target: str) -> float: ...


@dataclass
class SurprisalScore:
    """Per-word surprisals (nats) grouped by sentence, with their sums."""

    word_scores: list[list[float]]
    sentence_scores: list[float]
    utterance_score: float
    provider: str
    session_id: str
    utterance_index: int


class NgramLmProvider:
    """Adapter making an NgramModel serve the provider contract.

    Contexts shorter than order-1 (the first words of an utterance) are
    padded with start marks, so an utterance begins like a fresh sentence.
    """

    log_base = "natural"
    concurrent_safe = True

    def __init__(self, model: NgramModel):
        self.model = model
        self.name = f"ngram-{model.smoothing}"
        self.max_context = model.order - 1

    def log_prob(self, context: Sequence[str], target: str) -> float:
        need = self.model.order - 1
        ctx = list(context[max(0, len(context) - need) :])
        if len(ctx) < need:
            ctx = [BOS] * (need - len(ctx)) + ctx
        return lm_log_prob(self.model, ctx, target)


class ReplayLogProbProvider:
    """Replays log-probabilities from a sidecar file of
    {"context": [...], "target": ..., "logprob": ...} JSON lines."""

    log_base = "natural"
    concurrent_safe = True
    max_context = None
    name = "replay"

    def __init__(self, path: str | Path):
        self.table: dict[tuple[tuple[str, ...], str], float] = {}
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    key = (tuple(obj["context"]), obj["target"])
                    value = float(obj["logprob"])
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ProviderError(f"replay file line {lineno}: {exc}") from exc
                self.table[key] = value

    def log_prob(self, context: Sequence[str], target: str) -> float:
        key = (tuple(context), target)
        if key not in self.table:
            raise KeyError(f"no replay entry for target {target!r} after {key[0]}")
        return self.table[key]


def word_surprisal(
    provider: TokenProbabilityProvider, context: Sequence[str], target: str
) -> float:
    """-log P(target | context), truncating the context to the provider's
    declared maximum (most recent tokens kept)."""
    if provider.max_context is not None and len(context) > provider.max_context:
        context = context[len(context) - provider.max_context :]
    try:
        lp = provider.log_prob(context, target)
    except Exception as exc:
        raise ProviderError(f"provider {provider.name!r} failed on {target!r}: {exc}") from exc
    if not math.isfinite(lp) or lp > 0.0:
        raise ProviderError(
            f"provider {provider.name!r} returned invalid log-probability {lp!r}"
        )
    return -lp if lp != 0.0 else 0.0


def score_utterance(
    provider: TokenProbabilityProvider, utterance: Utterance
) -> SurprisalScore:
    """Score every word left to right against all preceding utterance words."""
    if not utterance.sentences:
        raise ValueError("utterance has no sentences")
    context: list[str] = []
    word_scores: list[list[float]] = []
    for sentence in utterance.sentences:
        scores = []
        for token in sentence.tokens:
            scores.append(word_surprisal(provider, context, token))
            context.append(token)
        word_scores.append(scores)
    sentence_scores = [math.fsum(scores) for scores in word_scores]
    return SurprisalScore(
        word_scores=word_scores,
        sentence_scores=sentence_scores,
        utterance_score=math.fsum(sentence_scores),
        provider=provider.name,
        session_id=utterance.session_id,
        utterance_index=utterance.utterance_index,
    )


def session_mean_sentence_surprisal(scores: Iterable[SurprisalScore]) -> float:
    """Arithmetic mean over all sentence scores of one session's utterances."""
    sentence_scores = [s for score in scores for s in score.sentence_scores]
    if not sentence_scores:
        raise ValueError("no sentence scores to average")
    return math.fsum(sentence_scores) / len(sentence_scores)
