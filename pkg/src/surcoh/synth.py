"""Synthetic corpora with controllable disruption severity.

Base utterances are template sentences filled from one of several disjoint
topic vocabularies that share a fixed set of function words.  Disruption
applies three independent channels, each scaled by a severity in [0, 1]:

  repeat   - duplicate a word in place            (per word)
  insert   - splice in a word from another topic  (per word)
  intrude  - replace a whole sentence with one generated from another topic
             (per sentence)

Severity zero is the identity.  Randomness is drawn from per-sentence
seeds, so output is deterministic and independent of processing order, and
raising the severity only adds disruption events to those already present.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Sentence, Session, Utterance

# slot markers used by the sentence templates
_N, _V, _ADJ = "<N>", "<V>", "<ADJ>"

FUNCTION_WORDS = (
    "the", "a", "my", "that", "this", "some", "every",
    "and", "of", "near", "while", "so", "there", "today", "now",
)

SENTENCE_TEMPLATES = (
    ("the", _N, _V, "near", "the", _N),
    ("my", _ADJ, _N, _V, "today"),
    ("that", _N, _V, "and", "the", _N, _V),
    ("a", _ADJ, _N, _V, "there"),
    ("the", _N, "of", "the", _N, _V),
    ("some", _N, _V, "while", "the", _N, _V),
    ("this", _ADJ, _N, _V, "now"),
    ("every", _N, _V, "so", "the", _ADJ, _N, _V),
)


@dataclass(frozen=True)
class TopicPool:
    name: str
    nouns: tuple[str, ...]
    verbs: tuple[str, ...]
    adjectives: tuple[str, ...]

    def content_words(self) -> tuple[str, ...]:
        return self.nouns + self.verbs + self.adjectives


DEFAULT_POOLS = (
    TopicPool(
        name="garden",
        nouns=("garden", "flower", "tree", "soil", "rose", "leaf", "seed", "branch",
               "lawn", "hedge"),
        verbs=("grows", "blooms", "wilts", "spreads", "thrives", "fades"),
        adjectives=("green", "bright", "fragrant", "tall", "wild", "fresh"),
    ),
    TopicPool(
        name="engine",
        nouns=("engine", "valve", "piston", "gear", "motor", "bolt", "wrench",
               "chassis", "clutch", "filter"),
        verbs=("spins", "rattles", "stalls", "whirs", "ignites", "revs"),
        adjectives=("rusty", "loud", "greasy", "heavy", "worn", "hot"),
    ),
    TopicPool(
        name="harbor",
        nouns=("harbor", "boat", "sail", "anchor", "dock", "wave", "ferry",
               "tide", "rope", "mast"),
        verbs=("drifts", "docks", "floats", "rocks", "sways", "moors"),
        adjectives=("salty", "calm", "misty", "deep", "windy", "gray"),
    ),
)

MIN_SENTENCES_PER_UTTERANCE = 3
MAX_SENTENCES_PER_UTTERANCE = 9
_SYNTH_BPRS_RANGE = (18, 67)


@dataclass(frozen=True)
class DisruptionConfig:
    """Channel base rates, each scaled by the severity.

    The intrusion ceiling stays below 0.5: above that, adjacent sentences
    are intruded together so often that coherence recovers, and the mean
    metrics stop responding monotonically to severity.
    """

    severity: float
    p_repeat: float = 0.3
    p_insert: float = 0.1
    p_intrude: float = 0.4
    seed: int = 0

    def __post_init__(self):
        for label, p in (
            ("severity", self.severity),
            ("p_repeat", self.p_repeat),
            ("p_insert", self.p_insert),
            ("p_intrude", self.p_intrude),
        ):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{label} must lie in [0,1], got {p}")
            if label != "severity" and not 0.0 <= self.severity * p <= 1.0:
                raise ValueError(f"severity*{label} must lie in [0,1]")


def validate_pools(pools: Sequence[TopicPool]) -> None:
    if len(pools) < 2:
        raise ValueError("need at least two topic pools")
    seen: dict[str, str] = {}
    for pool in pools:
        words = pool.content_words()
        if len(words) < 20:
            raise ValueError(f"pool {pool.name!r} has {len(words)} words, need >= 20")
        if not pool.nouns or not pool.verbs or not pool.adjectives:
            raise ValueError(f"pool {pool.name!r} must fill every template slot type")
        for w in words:
            if w in FUNCTION_WORDS:
                raise ValueError(f"pool word {w!r} collides with a function word")
            if w in seen:
                raise ValueError(f"pools {seen[w]!r} and {pool.name!r} share word {w!r}")
            seen[w] = pool.name


def _fill_template(rng: np.random.Generator, pool: TopicPool) -> list[str]:
    template = SENTENCE_TEMPLATES[int(rng.integers(0, len(SENTENCE_TEMPLATES)))]
    words = []
    for slot in template:
        if slot == _N:
            words.append(pool.nouns[int(rng.integers(0, len(pool.nouns)))])
        elif slot == _V:
            words.append(pool.verbs[int(rng.integers(0, len(pool.verbs)))])
        elif slot == _ADJ:
            words.append(pool.adjectives[int(rng.integers(0, len(pool.adjectives)))])
        else:
            words.append(slot)
    return words


def _make_sentence(tokens: Sequence[str]) -> Sentence:
    return Sentence(tokens=tuple(tokens), raw=" ".join(tokens) + ".")


def synthetic_bprs(index: int, n_sessions: int) -> int:
    lo, hi = _SYNTH_BPRS_RANGE
    if n_sessions <= 1:
        return lo
    return lo + round((hi - lo) * index / (n_sessions - 1))


def generate_base(
    n_sessions: int,
    utterances_per_session: int,
    topic_pools: Sequence[TopicPool] = DEFAULT_POOLS,
    seed: int = 0,
) -> list[Session]:
    """Clean sessions: each utterance is 3-9 template sentences drawn from
    a single topic pool; BPRS totals span 18-67; diagnosis alternates."""
    if n_sessions < 1 or utterances_per_session < 1:
        raise ValueError("need at least one session and one utterance per session")
    validate_pools(topic_pools)
    sessions = []
    for i in range(n_sessions):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        utterances = []
        for u in range(utterances_per_session):
            pool = topic_pools[int(rng.integers(0, len(topic_pools)))]
            n_sentences = int(
                rng.integers(MIN_SENTENCES_PER_UTTERANCE, MAX_SENTENCES_PER_UTTERANCE + 1)
            )
            sentences = tuple(
                _make_sentence(_fill_template(rng, pool)) for _ in range(n_sentences)
            )
            utterances.append(
                Utterance(sentences=sentences, session_id=f"syn-{i:04d}", utterance_index=u)
            )
        sessions.append(
            Session(
                session_id=f"syn-{i:04d}",
                subject_id=f"subj-{i:04d}",
                diagnosis="HC" if i % 2 == 0 else "SZ",
                bprs_total=synthetic_bprs(i, n_sessions),
                utterances=tuple(utterances),
            )
        )
    return sessions


def _dominant_pool(tokens: Sequence[str], pools: Sequence[TopicPool]) -> int:
    hits = [sum(1 for t in tokens if t in pool.content_words()) for pool in pools]
    return max(range(len(pools)), key=lambda i: (hits[i], -i))


def _disrupt_sentence(
    sentence: Sentence,
    config: DisruptionConfig,
    pools: Sequence[TopicPool],
    rng: np.random.Generator,
) -> Sentence:
    s = config.severity
    tokens = list(sentence.tokens)
    home = _dominant_pool(tokens, pools)
    others = [i for i in range(len(pools)) if i != home]

    if rng.random() < s * config.p_intrude:
        intruder = pools[others[int(rng.integers(0, len(others)))]]
        tokens = _fill_template(rng, intruder)
        home = pools.index(intruder)
        others = [i for i in range(len(pools)) if i != home]

    foreign = [w for i in others for w in pools[i].content_words()]
    out = []
    for token in tokens:
        out.append(token)
        if rng.random() < s * config.p_repeat:
            out.append(token)
        if rng.random() < s * config.p_insert:
            out.append(foreign[int(rng.integers(0, len(foreign)))])
    return _make_sentence(out)


def apply_disruption(
    sessions: Sequence[Session],
    config: DisruptionConfig,
    topic_pools: Sequence[TopicPool] = DEFAULT_POOLS,
) -> list[Session]:
    """Disrupt a corpus; severity 0 returns an identical corpus."""
    validate_pools(topic_pools)
    return [
        _apply_to_session(session, i, config, topic_pools)
        for i, session in enumerate(sessions)
    ]


def severity_for_bprs(bprs_total: int, max_severity: float = 1.0) -> float:
    """Map a BPRS total onto [0, max_severity] linearly over the 18-67 range."""
    lo, hi = _SYNTH_BPRS_RANGE
    clamped = min(max(bprs_total, lo), hi)
    return max_severity * (clamped - lo) / (hi - lo)


def apply_severity_gradient(
    sessions: Sequence[Session],
    config: DisruptionConfig,
    topic_pools: Sequence[TopicPool] = DEFAULT_POOLS,
) -> list[Session]:
    """Disrupt each session at a severity proportional to its BPRS total,
    with config.severity as the ceiling."""
    validate_pools(topic_pools)
    result = []
    for i, session in enumerate(sessions):
        bprs = session.bprs_total if session.bprs_total is not None else _SYNTH_BPRS_RANGE[0]
        scaled = DisruptionConfig(
            severity=severity_for_bprs(bprs, config.severity),
            p_repeat=config.p_repeat,
            p_insert=config.p_insert,
            p_intrude=config.p_intrude,
            seed=config.seed,
        )
        result.append(_apply_to_session(session, i, scaled, topic_pools))
    return result


def _apply_to_session(
    session: Session, index: int, config: DisruptionConfig, pools: Sequence[TopicPool]
) -> Session:
    utterances = []
    for utt in session.utterances:
        sentences = []
        for j, sentence in enumerate(utt.sentences):
            rng = np.random.default_rng(
                np.random.SeedSequence([config.seed, index, utt.utterance_index, j])
            )
            sentences.append(_disrupt_sentence(sentence, config, pools, rng))
        utterances.append(
            Utterance(
                sentences=tuple(sentences),
                session_id=utt.session_id,
                utterance_index=utt.utterance_index,
            )
        )
    return Session(
        session_id=session.session_id,
        subject_id=session.subject_id,
        diagnosis=session.diagnosis,
        bprs_total=session.bprs_total,
        utterances=tuple(utterances),
    )
