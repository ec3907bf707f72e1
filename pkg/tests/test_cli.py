import json
from pathlib import Path

import pytest

from surcoh.cli import run


def read_csv_names(path: Path):
    return sorted(p.name for p in path.glob("*.csv"))


@pytest.fixture(scope="module")
def synth_corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("sim") / "synth.jsonl"
    code = run([
        "simulate", "--sessions", "10", "--utterances-per-session", "4",
        "--severity", "0.5", "--seed", "3", "--out", str(path),
    ])
    assert code == 0
    return path


class TestExitCodes:
    def test_missing_corpus_flag_is_usage_error(self, capsys):
        assert run(["score", "--metric", "surprisal", "--out", "x.csv"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_flag_is_usage_error(self):
        assert run(["simulate", "--does-not-exist", "1", "--out", "x"]) == 1

    def test_corrupt_corpus_line_is_data_error(self, tmp_path, capsys):
        path = tmp_path / "bad.jsonl"
        good = {
            "session_id": "s", "subject_id": "p", "diagnosis": "HC",
            "bprs_total": 20, "utterance_index": 0, "speaker": "subject",
            "text": "Fine.",
        }
        path.write_text(json.dumps(good) + "\n{oops\n", encoding="utf-8")
        assert run(["ingest-check", "--corpus", str(path)]) == 2
        assert "line 2" in capsys.readouterr().err

    def test_conflicting_provider_flags_usage_error(self, synth_corpus, tmp_path):
        code = run([
            "score", "--corpus", str(synth_corpus), "--metric", "lda-coherence",
            "--replay", "whatever.jsonl", "--out", str(tmp_path / "x.csv"),
        ])
        assert code == 1


class TestPipeline:
    def test_ingest_check(self, synth_corpus, capsys):
        assert run(["ingest-check", "--corpus", str(synth_corpus)]) == 0
        out = capsys.readouterr().out
        assert "sessions: 10" in out
        assert "utterances: 40" in out

    def test_full_pipeline_emits_four_tables(self, synth_corpus, tmp_path):
        work = tmp_path
        lm_path = work / "models" / "model.lm"
        lda_path = work / "models" / "model.lda"
        scores = work / "scores"
        analysis = work / "analysis"
        assert run(["train-lm", "--corpus", str(synth_corpus), "--min-count", "1",
                    "--out", str(lm_path)]) == 0
        assert run(["train-lda", "--corpus", str(synth_corpus), "--topics", "6",
                    "--iters", "40", "--seed", "5", "--out", str(lda_path)]) == 0
        assert run(["score", "--corpus", str(synth_corpus), "--metric", "surprisal",
                    "--lm", str(lm_path), "--out", str(scores / "surprisal.csv")]) == 0
        assert run(["score", "--corpus", str(synth_corpus), "--metric", "lda-coherence",
                    "--lda", str(lda_path), "--fold-in-iters", "30",
                    "--out", str(scores / "lda_coherence.csv")]) == 0
        assert run(["score", "--corpus", str(synth_corpus), "--metric", "embed-coherence",
                    "--dim", "65536", "--out", str(scores / "embed_coherence.csv")]) == 0
        assert run(["analyze", "--corpus", str(synth_corpus), "--scores", str(scores),
                    "--out", str(analysis)]) == 0

        names = read_csv_names(analysis)
        assert "group_means.csv" in names
        assert "method_agreement.csv" in names
        assert "group_relation.csv" in names
        assert any(n.startswith("severity_trend_") for n in names)
        # manifests accompany every output
        assert (analysis / "manifest.json").exists()
        assert (scores / "surprisal.csv.manifest.json").exists()

    def test_score_csv_shape_and_skips(self, synth_corpus, tmp_path):
        out = tmp_path / "embed.csv"
        assert run(["score", "--corpus", str(synth_corpus), "--metric", "embed-coherence",
                    "--dim", "4096", "--min-sentences", "5", "--out", str(out)]) == 0
        header = out.read_text(encoding="utf-8").splitlines()[0]
        assert header == "session_id,utterance_index,sentence_index,score,provider"
        skips = (tmp_path / "embed.skips.csv").read_text(encoding="utf-8").splitlines()
        assert skips[0] == "session_id,utterance_index,reason"

    def test_jobs_flag_matches_serial_output(self, synth_corpus, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out, jobs in ((a, "1"), (b, "4")):
            assert run(["score", "--corpus", str(synth_corpus), "--metric",
                        "embed-coherence", "--dim", "4096", "--jobs", jobs,
                        "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_simulate_gradient(self, tmp_path):
        out = tmp_path / "grad.jsonl"
        assert run(["simulate", "--sessions", "6", "--utterances-per-session", "3",
                    "--severity", "1.0", "--gradient", "--seed", "2",
                    "--out", str(out)]) == 0
        assert out.exists()

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SURCOH_SESSIONS", "3")
        out = tmp_path / "env.jsonl"
        assert run(["simulate", "--utterances-per-session", "2", "--seed", "1",
                    "--out", str(out)]) == 0
        sessions = {json.loads(line)["session_id"]
                    for line in out.read_text(encoding="utf-8").splitlines()}
        assert len(sessions) == 3


class TestReproducibility:
    def test_rerun_byte_identical(self, tmp_path):
        def pipeline(root: Path):
            sim = root / "synth.jsonl"
            lm_path = root / "model.lm"
            scores = root / "scores"
            analysis = root / "analysis"
            assert run(["simulate", "--sessions", "8", "--utterances-per-session", "3",
                        "--severity", "0.4", "--seed", "11", "--out", str(sim)]) == 0
            assert run(["train-lm", "--corpus", str(sim), "--min-count", "1",
                        "--out", str(lm_path)]) == 0
            assert run(["score", "--corpus", str(sim), "--metric", "surprisal",
                        "--lm", str(lm_path), "--out", str(scores / "surprisal.csv")]) == 0
            assert run(["score", "--corpus", str(sim), "--metric", "embed-coherence",
                        "--dim", "4096", "--out", str(scores / "embed_coherence.csv")]) == 0
            assert run(["analyze", "--corpus", str(sim), "--scores", str(scores),
                        "--out", str(analysis)]) == 0

        first, second = tmp_path / "one", tmp_path / "two"
        pipeline(first)
        pipeline(second)
        csvs = sorted(p.relative_to(first) for p in first.rglob("*.csv"))
        assert csvs
        for rel in csvs:
            assert (first / rel).read_bytes() == (second / rel).read_bytes(), rel
