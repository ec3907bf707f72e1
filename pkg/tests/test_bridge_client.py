"""Bridge-client protocol tests against a minimal inline stub process."""

import json
import sys
import textwrap

import pytest

from surcoh.bridge_client import (
    BridgeClient,
    BridgeEmbeddingProvider,
    BridgeError,
    BridgeLogProbProvider,
)
from surcoh.corpus import Sentence, Utterance
from surcoh.embed import embed_coherence
from surcoh.surprisal import score_utterance

STUB = textwrap.dedent(
    """
    import json, sys

    for line in sys.stdin:
        req = json.loads(line)
        kind = req.get("kind")
        if kind == "handshake":
            value = {"provider": "mini-stub", "log_base": "natural",
                     "embedding_dimension": 3, "max_context_tokens": 8}
            resp = {"id": req["id"], "ok": True, "value": value, "detail": None}
        elif kind == "logprob":
            n = len(req["payload"]["context"]) + len(req["payload"]["target"])
            resp = {"id": req["id"], "ok": True, "value": -0.25 * (n % 7 + 1),
                    "detail": None}
        elif kind == "embed":
            s = req["payload"]["sentence"]
            resp = {"id": req["id"], "ok": True,
                    "value": [1.0, float(len(s) % 5), 0.5], "detail": None}
        else:
            resp = {"id": req.get("id"), "ok": False, "value": None,
                    "detail": {"error": f"unknown kind {kind!r}"}}
        sys.stdout.write(json.dumps(resp) + "\\n")
        sys.stdout.flush()
    """
)


@pytest.fixture
def stub_cmd(tmp_path):
    script = tmp_path / "mini_bridge.py"
    script.write_text(STUB, encoding="utf-8")
    return f"{sys.executable} {script}"


def utt(*sentences):
    return Utterance(
        sentences=tuple(Sentence(tokens=tuple(s.split()), raw=s + ".") for s in sentences),
        session_id="s01",
        utterance_index=0,
    )


class TestBridgeClient:
    def test_handshake_capabilities(self, stub_cmd):
        with BridgeClient(stub_cmd) as client:
            caps = client.capabilities
            assert caps.provider == "mini-stub"
            assert caps.log_base == "natural"
            assert caps.embedding_dimension == 3
            assert caps.max_context_tokens == 8

    def test_logprob_roundtrip(self, stub_cmd):
        with BridgeClient(stub_cmd) as client:
            value = client.logprob(["the", "cat"], "sat")
            assert value <= 0.0
            assert client.logprob(["the", "cat"], "sat") == value

    def test_embed_dimension_checked(self, stub_cmd):
        with BridgeClient(stub_cmd) as client:
            assert len(client.embed("the cat sat")) == 3

    def test_unknown_kind_reported(self, stub_cmd):
        with BridgeClient(stub_cmd) as client:
            with pytest.raises(BridgeError, match="unknown kind"):
                client.request("nonsense", {})

    def test_ids_match_over_many_requests(self, stub_cmd):
        with BridgeClient(stub_cmd) as client:
            for _ in range(200):
                assert client.logprob(["a"], "b") <= 0.0

    def test_dead_process_detected(self, stub_cmd):
        client = BridgeClient(stub_cmd)
        client.close()
        with pytest.raises(BridgeError):
            client.logprob(["a"], "b")


class TestBridgeProviders:
    def test_surprisal_scoring_through_bridge(self, stub_cmd):
        with BridgeClient(stub_cmd) as client:
            provider = BridgeLogProbProvider(client)
            assert provider.max_context == 8
            score = score_utterance(provider, utt("the cat sat", "it was warm"))
            assert score.utterance_score > 0.0
            assert score.provider == "bridge:mini-stub"

    def test_coherence_scoring_through_bridge(self, stub_cmd):
        with BridgeClient(stub_cmd) as client:
            provider = BridgeEmbeddingProvider(client)
            result = embed_coherence(provider, utt("a b", "c d", "e f"))
            assert len(result.pair_similarities) == 2
            assert -1.0 <= result.value <= 1.0
