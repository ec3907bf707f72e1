import json
import math
import random

import pytest
from hypothesis import given, strategies as st

from surcoh.corpus import Sentence, Utterance
from surcoh.embed import (
    CoherenceScore,
    Embedding,
    EmbeddingError,
    HashedBowProvider,
    ReplayEmbeddingProvider,
    Skip,
    builtin_embed,
    cosine,
    embed_coherence,
)


def utt(*sentences, session_id="s01", utterance_index=0):
    return Utterance(
        sentences=tuple(Sentence(tokens=tuple(s.split()), raw=s + ".") for s in sentences),
        session_id=session_id,
        utterance_index=utterance_index,
    )


def write_vectors(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")


def vector_row(sid, uidx, sidx, vec):
    return {
        "session_id": sid,
        "utterance_index": uidx,
        "sentence_index": sidx,
        "vector": list(vec),
    }


class TestBuiltinEmbed:
    def test_deterministic(self):
        a = builtin_embed(["the", "cat", "sat"], dim=64)
        b = builtin_embed(["the", "cat", "sat"], dim=64)
        assert a == b

    def test_unit_norm(self):
        for tokens in (["one"], ["a", "b", "c"], ["x"] * 7):
            emb = builtin_embed(tokens, dim=128)
            assert abs(emb.norm() - 1.0) < 1e-9

    def test_empty_sentence_rejected(self):
        with pytest.raises(ValueError):
            builtin_embed([], dim=16)

    def test_dim_one_fallback_never_zero(self):
        # at dim=1 opposing signs can cancel exactly; fallback must kick in
        rng = random.Random(11)
        for _ in range(200):
            tokens = [f"w{rng.randrange(50)}" for _ in range(rng.randrange(1, 6))]
            emb = builtin_embed(tokens, dim=1)
            assert emb.norm() > 0.0

    def test_disjoint_sentences_near_orthogonal_at_large_dim(self):
        # empirical check over 1000 random disjoint pairs at d=2^20
        rng = random.Random(202)
        dim = 1 << 20
        below = 0
        for i in range(1000):
            a = [f"left-{i}-{j}" for j in range(rng.randrange(3, 8))]
            b = [f"right-{i}-{j}" for j in range(rng.randrange(3, 8))]
            c = cosine(builtin_embed(a, dim), builtin_embed(b, dim))
            if abs(c) < 0.05:
                below += 1
        assert below >= 995


class TestCosine:
    def test_orthogonal(self):
        a = Embedding(2, {0: 1.0})
        b = Embedding(2, {1: 1.0})
        assert cosine(a, b) == 0.0

    def test_identical_is_one(self):
        a = builtin_embed(["the", "cat"], dim=32)
        assert abs(cosine(a, a) - 1.0) < 1e-12

    def test_zero_norm_rejected(self):
        with pytest.raises(EmbeddingError):
            cosine(Embedding(2, {}), Embedding(2, {0: 1.0}))


class TestEmbedCoherence:
    def test_three_identical_sentences_score_one(self):
        score = embed_coherence(HashedBowProvider(dim=256), utt("a b c", "a b c", "a b c"))
        assert isinstance(score, CoherenceScore)
        assert abs(score.value - 1.0) < 1e-12
        assert len(score.pair_similarities) == 2

    def test_orthogonal_replay_vectors_score_zero(self, tmp_path):
        path = tmp_path / "v.jsonl"
        write_vectors(
            path,
            [
                vector_row("s01", 0, 0, [1.0, 0.0]),
                vector_row("s01", 0, 1, [0.0, 1.0]),
                vector_row("s01", 0, 2, [1.0, 0.0]),
            ],
        )
        score = embed_coherence(ReplayEmbeddingProvider(path), utt("a", "b", "c"))
        assert score.value == 0.0
        assert score.pair_similarities == [0.0, 0.0]

    def test_hand_computed_diagonal_case(self, tmp_path):
        # vectors (1,0), (1,1)/sqrt2, (0,1): adjacent cosines are both
        # 1/sqrt2, so the mean is 1/sqrt2 ~= 0.7071
        r = 1.0 / math.sqrt(2.0)
        path = tmp_path / "v.jsonl"
        write_vectors(
            path,
            [
                vector_row("s01", 0, 0, [1.0, 0.0]),
                vector_row("s01", 0, 1, [r, r]),
                vector_row("s01", 0, 2, [0.0, 1.0]),
            ],
        )
        score = embed_coherence(ReplayEmbeddingProvider(path), utt("a", "b", "c"))
        expected = (r / math.hypot(r, r) + r / math.hypot(r, r)) / 2.0
        assert abs(score.value - expected) < 1e-12
        assert abs(score.value - 0.7071) < 5e-5

    def test_two_sentences_skipped(self):
        result = embed_coherence(HashedBowProvider(dim=64), utt("a b", "c d"))
        assert isinstance(result, Skip)
        assert "need >= 3" in result.reason

    def test_skip_accounting(self):
        provider = HashedBowProvider(dim=64)
        utterances = [
            utt("a", "b", "c", utterance_index=0),
            utt("a b", utterance_index=1),
            utt("a", "b", "c", "d", utterance_index=2),
        ]
        results = [embed_coherence(provider, u) for u in utterances]
        scored = [r for r in results if isinstance(r, CoherenceScore)]
        skipped = [r for r in results if isinstance(r, Skip)]
        assert len(scored) + len(skipped) == len(utterances)
        assert len(skipped) == 1

    def test_provider_failure_names_sentence(self, tmp_path):
        path = tmp_path / "v.jsonl"
        write_vectors(path, [vector_row("s01", 0, 0, [1.0, 0.0])])
        with pytest.raises(EmbeddingError, match="sentence 1"):
            embed_coherence(ReplayEmbeddingProvider(path), utt("a", "b", "c"))

    @given(st.floats(min_value=0.001, max_value=1000.0))
    def test_scale_invariance(self, c):
        class Fixed:
            concurrent_safe = True
            name = "fixed-vectors"
            dim = 3

            def __init__(self, vectors):
                self.vectors = vectors

            def embed(self, tokens, session_id=None, utterance_index=None,
                      sentence_index=None):
                vec = self.vectors[sentence_index]
                return Embedding(3, {i: x for i, x in enumerate(vec) if x != 0.0})

        base = [[1.0, 2.0, 0.5], [0.5, 1.5, 1.0], [2.0, 0.1, 0.3]]
        scaled = [[x * c if i == 1 else x for x in v] for i, v in enumerate(base)]
        u = utt("a", "b", "c")
        s1 = embed_coherence(Fixed(base), u)
        s2 = embed_coherence(Fixed(scaled), u)
        assert abs(s1.value - s2.value) < 1e-12

    def test_reversal_symmetry(self, tmp_path):
        vectors = [[1.0, 0.2], [0.3, 0.9], [0.5, 0.5], [0.9, 0.1]]
        fwd, rev = tmp_path / "f.jsonl", tmp_path / "r.jsonl"
        write_vectors(fwd, [vector_row("s01", 0, i, v) for i, v in enumerate(vectors)])
        write_vectors(
            rev, [vector_row("s01", 0, i, v) for i, v in enumerate(reversed(vectors))]
        )
        u = utt("a", "b", "c", "d")
        assert (
            embed_coherence(ReplayEmbeddingProvider(fwd), u).value
            == embed_coherence(ReplayEmbeddingProvider(rev), u).value
        )
