"""Command-line entry point: ingest-check, train-lm, train-lda, score,
analyze, simulate.

Every command that writes outputs also writes a run manifest (resolved
flags, input digests, seed, version, timestamp) next to them.  Reruns with
identical manifest inputs produce byte-identical CSVs; the timestamp lives
only in the manifest.

Exit codes: 0 success, 1 usage error, 2 data error.  Any flag default can
be overridden with an environment variable SURCOH_<FLAG> (flag name upper
cased, dashes as underscores), e.g. SURCOH_SEED=11.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__, corpus, embed, lda, lm, stats, synth
from .bridge_client import (
    BridgeClient,
    BridgeEmbeddingProvider,
    BridgeError,
    BridgeLogProbProvider,
)
from .corpus import CorpusFilter, CorpusFormatError
from .embed import EmbeddingError, HashedBowProvider, ReplayEmbeddingProvider, Skip
from .surprisal import NgramLmProvider, ProviderError, ReplayLogProbProvider, score_utterance

AGG = "AGG"
SCORE_COLUMNS = ("session_id", "utterance_index", "sentence_index", "score", "provider")
METRIC_FILES = {
    "surprisal": "surprisal.csv",
    "lda-coherence": "lda_coherence.csv",
    "embed-coherence": "embed_coherence.csv",
}

DATA_ERRORS = (
    CorpusFormatError,
    lm.ModelFormatError,
    lda.ModelFormatError,
    ProviderError,
    EmbeddingError,
    BridgeError,
    lda.UnscorableSegment,
    stats.DegenerateVariance,
    ValueError,
    KeyError,
    OSError,
)


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2; the contract wants 1
        raise UsageError(message)


def _env(flag: str, cast, fallback):
    raw = os.environ.get(f"SURCOH_{flag.upper().replace('-', '_')}")
    if raw is None:
        return fallback
    return cast(raw)


def _parse_bprs_range(text: str) -> tuple[int, int] | None:
    if text.lower() == "none":
        return None
    try:
        lo, hi = text.split(":")
        return int(lo), int(hi)
    except ValueError as exc:
        raise UsageError(f"--bprs-range must be LO:HI or 'none', got {text!r}") from exc


def _corpus_filter(args) -> CorpusFilter:
    diagnoses = frozenset(p.strip() for p in args.diagnoses.split(",") if p.strip())
    unknown = diagnoses - set(corpus.DIAGNOSES)
    if unknown:
        raise UsageError(f"unknown diagnoses {sorted(unknown)}")
    return CorpusFilter(diagnoses=diagnoses, bprs_range=_parse_bprs_range(args.bprs_range))


def _add_corpus_flags(parser):
    parser.add_argument("--corpus", required=True, help="line-delimited transcript records")
    parser.add_argument(
        "--diagnoses", default=_env("diagnoses", str, "HC,SZ"),
        help="comma-separated diagnosis allow-list (default HC,SZ)",
    )
    parser.add_argument(
        "--bprs-range", default=_env("bprs-range", str, "18:67"),
        help="inclusive LO:HI BPRS filter, or 'none' (default 18:67)",
    )


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_path: Path, command: str, args, inputs: list[str]) -> None:
    flags = {
        k: v for k, v in sorted(vars(args).items()) if k != "func" and not k.startswith("_")
    }
    manifest = {
        "command": command,
        "flags": flags,
        "inputs": {str(p): _digest(p) for p in inputs},
        "seed": flags.get("seed"),
        "tool_version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    with open(out_path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def _write_csv(path: Path, columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_ingest_check(args) -> int:
    sessions = corpus.load_corpus(args.corpus, _corpus_filter(args))
    n_utts = sum(len(s.utterances) for s in sessions)
    sentence_counts = [
        len(u.sentences) for s in sessions for u in s.utterances
    ]
    by_diag: dict[str, int] = {}
    for s in sessions:
        by_diag[s.diagnosis] = by_diag.get(s.diagnosis, 0) + 1
    print(f"sessions: {len(sessions)}")
    print(f"subjects: {len({s.subject_id for s in sessions})}")
    print(f"utterances: {n_utts}")
    if sentence_counts:
        print(f"sentences/utterance: min {min(sentence_counts)} max {max(sentence_counts)}")
        short = sum(1 for c in sentence_counts if c < 3)
        print(f"utterances below 3 sentences (skipped by coherence): {short}")
    for diag in sorted(by_diag):
        print(f"diagnosis {diag}: {by_diag[diag]} sessions")
    bprs = [s.bprs_total for s in sessions if s.bprs_total is not None]
    if bprs:
        print(f"bprs: min {min(bprs)} max {max(bprs)}")
    return 0


def cmd_train_lm(args) -> int:
    sessions = corpus.load_corpus(args.corpus, _corpus_filter(args))
    sentences = corpus.corpus_sentences(sessions)
    model = lm.train(
        sentences,
        order=args.order,
        discount=args.discount,
        min_count=args.min_count,
        smoothing=args.smoothing,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lm.save(model, out)
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "train-lm", args,
                    [args.corpus])
    print(f"trained order-{model.order} {model.smoothing} model "
          f"({len(model.vocabulary)} word vocabulary) -> {out}")
    return 0


def cmd_train_lda(args) -> int:
    sessions = corpus.load_corpus(args.corpus, _corpus_filter(args))
    documents = corpus.corpus_documents(sessions)
    model = lda.train_lda(
        documents,
        k=args.topics,
        alpha=args.alpha,
        beta=args.beta,
        iterations=args.iters,
        seed=args.seed,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lda.save(model, out)
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "train-lda", args,
                    [args.corpus])
    print(f"trained {model.k}-topic model over {len(model.vocabulary)} words -> {out}")
    return 0


def _map_utterances(fn, utterances, jobs, concurrent_safe):
    if jobs > 1 and concurrent_safe:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, utterances))
    return [fn(u) for u in utterances]


def _score_surprisal(args, sessions, inputs):
    if args.provider == "builtin":
        if not args.lm:
            raise UsageError("--metric surprisal --provider builtin requires --lm")
        provider = NgramLmProvider(lm.load(args.lm))
        inputs.append(args.lm)
        close = None
    elif args.provider == "replay":
        if not args.replay:
            raise UsageError("--provider replay requires --replay")
        provider = ReplayLogProbProvider(args.replay)
        inputs.append(args.replay)
        close = None
    else:
        if not args.bridge_cmd:
            raise UsageError("--provider bridge requires --bridge-cmd")
        client = BridgeClient(args.bridge_cmd)
        provider = BridgeLogProbProvider(client)
        close = client.close

    rows, skips = [], []
    try:
        utterances = [u for s in sessions for u in s.utterances]
        scores = _map_utterances(
            lambda u: score_utterance(provider, u), utterances, args.jobs,
            provider.concurrent_safe,
        )
    finally:
        if close:
            close()
    for score in scores:
        for j, sentence_score in enumerate(score.sentence_scores):
            rows.append((score.session_id, score.utterance_index, j, sentence_score,
                         score.provider))
        rows.append((score.session_id, score.utterance_index, AGG, score.utterance_score,
                     score.provider))
    return rows, skips


def _score_lda_coherence(args, sessions, inputs):
    if not args.lda:
        raise UsageError("--metric lda-coherence requires --lda")
    model = lda.load(args.lda)
    inputs.append(args.lda)
    provider_name = f"lda-k{model.k}"

    def score_one(utterance):
        return lda.lda_coherence(
            model, utterance, min_sentences=args.min_sentences,
            fold_in_iterations=args.fold_in_iters, seed=args.seed,
        )

    utterances = [u for s in sessions for u in s.utterances]
    results = _map_utterances(score_one, utterances, args.jobs, True)
    rows, skips = [], []
    for result in results:
        if isinstance(result, Skip):
            skips.append((result.session_id, result.utterance_index, result.reason))
            continue
        for j, pair in enumerate(result.pair_similarities):
            rows.append((result.session_id, result.utterance_index, j, pair, provider_name))
        rows.append((result.session_id, result.utterance_index, AGG, result.value,
                     provider_name))
    return rows, skips


def _score_embed_coherence(args, sessions, inputs):
    if args.provider == "builtin":
        provider = HashedBowProvider(dim=args.dim)
        close = None
    elif args.provider == "replay":
        if not args.replay:
            raise UsageError("--provider replay requires --replay")
        provider = ReplayEmbeddingProvider(args.replay)
        inputs.append(args.replay)
        close = None
    else:
        if not args.bridge_cmd:
            raise UsageError("--provider bridge requires --bridge-cmd")
        client = BridgeClient(args.bridge_cmd)
        provider = BridgeEmbeddingProvider(client)
        close = client.close

    def score_one(utterance):
        return embed.embed_coherence(provider, utterance, min_sentences=args.min_sentences)

    try:
        utterances = [u for s in sessions for u in s.utterances]
        results = _map_utterances(score_one, utterances, args.jobs, provider.concurrent_safe)
    finally:
        if close:
            close()
    rows, skips = [], []
    for result in results:
        if isinstance(result, Skip):
            skips.append((result.session_id, result.utterance_index, result.reason))
            continue
        for j, pair in enumerate(result.pair_similarities):
            rows.append((result.session_id, result.utterance_index, j, pair,
                         result.provider))
        rows.append((result.session_id, result.utterance_index, AGG, result.value,
                     result.provider))
    return rows, skips


def cmd_score(args) -> int:
    if args.metric == "lda-coherence" and (
        args.provider != "builtin" or args.bridge_cmd or args.replay
    ):
        raise UsageError("lda-coherence uses the built-in topic model, not a provider")
    if args.replay and args.provider != "replay":
        raise UsageError(f"--replay conflicts with --provider {args.provider}")
    if args.bridge_cmd and args.provider != "bridge":
        raise UsageError(f"--bridge-cmd conflicts with --provider {args.provider}")
    sessions = corpus.load_corpus(args.corpus, _corpus_filter(args))
    inputs = [args.corpus]
    if args.metric == "surprisal":
        rows, skips = _score_surprisal(args, sessions, inputs)
    elif args.metric == "lda-coherence":
        rows, skips = _score_lda_coherence(args, sessions, inputs)
    else:
        rows, skips = _score_embed_coherence(args, sessions, inputs)

    out = Path(args.out)
    _write_csv(out, SCORE_COLUMNS, rows)
    skip_path = out.with_name(out.stem + ".skips.csv")
    _write_csv(skip_path, ("session_id", "utterance_index", "reason"), skips)
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "score", args, inputs)
    total = sum(len(s.utterances) for s in sessions)
    scored = len({(r[0], r[1]) for r in rows})
    print(f"scored {scored} utterances, skipped {len(skips)} of {total} -> {out}")
    if scored + len(skips) != total:
        raise ValueError("skip accounting failed: scored + skipped != total")
    return 0


def _read_score_csv(path: Path):
    agg, units = [], []
    with open(path, encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            record = (row["session_id"], int(row["utterance_index"]), float(row["score"]))
            if row["sentence_index"] == AGG:
                agg.append(record)
            else:
                units.append(record)
    return agg, units


def cmd_analyze(args) -> int:
    sessions = corpus.load_corpus(args.corpus, _corpus_filter(args))
    info = {
        s.session_id: stats.SessionInfo(diagnosis=s.diagnosis, bprs_total=s.bprs_total)
        for s in sessions
    }
    scores_dir = Path(args.scores)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    session_mean_by_metric: dict[str, list[stats.SessionMean]] = {}
    agg_by_metric: dict[str, list[tuple[str, int, float]]] = {}
    group_rows = []
    inputs = [args.corpus]
    for metric, filename in METRIC_FILES.items():
        path = scores_dir / filename
        if not path.exists():
            continue
        inputs.append(str(path))
        agg, units = _read_score_csv(path)
        agg_by_metric[metric] = agg
        # Table-1 analog uses sentence-level units for surprisal and the
        # per-utterance value for the coherence metrics
        values = units if metric == "surprisal" else agg
        per_session, summaries = stats.group_means(
            [(sid, value) for sid, _, value in values], info, metric
        )
        session_mean_by_metric[metric] = per_session
        for sm in per_session:
            group_rows.append(("session", sm.group, sm.session_id, sm.metric, sm.mean,
                               None, 1, sm.n_values))
        for g in summaries:
            group_rows.append(("group", g.group, None, g.metric, g.mean, g.std,
                               g.n_sessions, g.n_values))
    if not session_mean_by_metric:
        raise ValueError(f"no score tables found under {scores_dir}")

    _write_csv(
        out_dir / "group_means.csv",
        ("level", "group", "session_id", "metric", "mean", "std", "n_sessions", "n_values"),
        group_rows,
    )

    if "lda-coherence" in agg_by_metric and "embed-coherence" in agg_by_metric:
        lda_scores = {(sid, uidx): v for sid, uidx, v in agg_by_metric["lda-coherence"]}
        embed_scores = {(sid, uidx): v for sid, uidx, v in agg_by_metric["embed-coherence"]}
        try:
            agreement = stats.method_agreement(lda_scores, embed_scores)
            pearson_r, spearman_rho = agreement.pearson_r, agreement.spearman_rho
            pairs = agreement.pairs
        except stats.DegenerateVariance:
            keys = sorted(set(lda_scores) & set(embed_scores))
            pearson_r = spearman_rho = None
            pairs = [(sid, uidx, lda_scores[(sid, uidx)], embed_scores[(sid, uidx)])
                     for sid, uidx in keys]
        _write_csv(
            out_dir / "method_agreement.csv",
            ("session_id", "utterance_index", "lda_coherence", "embed_coherence",
             "pearson_r", "spearman_rho"),
            [(sid, uidx, a, b, pearson_r, spearman_rho) for sid, uidx, a, b in pairs],
        )

    if "surprisal" in session_mean_by_metric and "embed-coherence" in session_mean_by_metric:
        relations = stats.group_relation(
            session_mean_by_metric["surprisal"],
            session_mean_by_metric["embed-coherence"],
            min_sessions=args.min_sessions,
        )
        _write_csv(
            out_dir / "group_relation.csv",
            ("group", "slope", "intercept", "r", "n_sessions", "degenerate"),
            [(rel.group, rel.slope, rel.intercept, rel.r, rel.n_sessions,
              str(rel.degenerate).lower()) for rel in relations],
        )

    for metric, per_session in session_mean_by_metric.items():
        if all(sm.bprs_total is None for sm in per_session):
            continue
        points = stats.severity_trend(
            per_session,
            window_halfwidth=args.window_halfwidth,
            min_support=args.min_support,
        )
        _write_csv(
            out_dir / f"severity_trend_{metric.replace('-', '_')}.csv",
            ("bprs_center", "window_lo", "window_hi", "mean", "n_sessions"),
            [(p.bprs_center, p.window_lo, p.window_hi, p.mean, p.n_sessions)
             for p in points],
        )

    _write_manifest(out_dir / "manifest.json", "analyze", args, inputs)
    tables = sorted(p.name for p in out_dir.glob("*.csv"))
    print(f"wrote {len(tables)} analysis tables to {out_dir}: {', '.join(tables)}")
    return 0


def cmd_simulate(args) -> int:
    base = synth.generate_base(
        n_sessions=args.sessions,
        utterances_per_session=args.utterances_per_session,
        seed=args.seed,
    )
    config = synth.DisruptionConfig(
        severity=args.severity,
        p_repeat=args.p_repeat,
        p_insert=args.p_insert,
        p_intrude=args.p_intrude,
        seed=args.seed,
    )
    if args.gradient:
        sessions = synth.apply_severity_gradient(base, config)
    else:
        sessions = synth.apply_disruption(base, config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    corpus.write_corpus(sessions, out)
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "simulate", args, [])
    n_utts = sum(len(s.utterances) for s in sessions)
    print(f"simulated {len(sessions)} sessions / {n_utts} utterances -> {out}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="surcoh",
        description="Surprisal and semantic-coherence analytics for speech transcripts",
        epilog="Flag defaults can be overridden via SURCOH_<FLAG> environment variables.",
    )
    parser.add_argument("--version", action="version", version=f"surcoh {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-check", help="validate a corpus file and print a summary")
    _add_corpus_flags(p)
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("train-lm", help="train the reference n-gram language model")
    _add_corpus_flags(p)
    p.add_argument("--order", type=int, default=_env("order", int, lm.DEFAULT_ORDER))
    p.add_argument("--discount", type=float,
                   default=_env("discount", float, lm.DEFAULT_DISCOUNT))
    p.add_argument("--min-count", type=int,
                   default=_env("min-count", int, lm.DEFAULT_MIN_COUNT))
    p.add_argument("--smoothing", choices=("kneser_ney", "mle"), default="kneser_ney")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_lm)

    p = sub.add_parser("train-lda", help="train the topic model")
    _add_corpus_flags(p)
    p.add_argument("--topics", type=int, default=_env("topics", int, lda.DEFAULT_TOPICS))
    p.add_argument("--alpha", type=float, default=None,
                   help="document-topic prior (default 50/topics)")
    p.add_argument("--beta", type=float, default=_env("beta", float, lda.DEFAULT_BETA))
    p.add_argument("--iters", type=int,
                   default=_env("iters", int, lda.DEFAULT_ITERATIONS))
    p.add_argument("--seed", type=int, default=_env("seed", int, lda.DEFAULT_SEED))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_lda)

    p = sub.add_parser("score", help="score a corpus with one metric")
    _add_corpus_flags(p)
    p.add_argument("--metric", required=True,
                   choices=("surprisal", "lda-coherence", "embed-coherence"))
    p.add_argument("--provider", choices=("builtin", "replay", "bridge"),
                   default="builtin")
    p.add_argument("--lm", help="n-gram model file (surprisal, builtin provider)")
    p.add_argument("--lda", help="topic model file (lda-coherence)")
    p.add_argument("--replay", help="replay sidecar file (replay provider)")
    p.add_argument("--bridge-cmd", help="bridge server command (bridge provider)")
    p.add_argument("--dim", type=int, default=_env("dim", int, embed.DEFAULT_DIMENSION),
                   help="built-in embedding dimension")
    p.add_argument("--min-sentences", type=int,
                   default=_env("min-sentences", int, embed.DEFAULT_MIN_SENTENCES))
    p.add_argument("--fold-in-iters", type=int,
                   default=_env("fold-in-iters", int, lda.DEFAULT_FOLD_IN_ITERATIONS))
    p.add_argument("--seed", type=int, default=_env("seed", int, lda.DEFAULT_SEED))
    p.add_argument("--jobs", type=int, default=_env("jobs", int, 1),
                   help="parallel scoring workers (concurrent-safe providers only)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("analyze", help="emit the group/severity analysis tables")
    _add_corpus_flags(p)
    p.add_argument("--scores", required=True,
                   help="directory holding surprisal.csv / lda_coherence.csv / "
                        "embed_coherence.csv")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--min-sessions", type=int, default=3,
                   help="sessions needed per group for the relation table")
    p.add_argument("--window-halfwidth", type=int,
                   default=_env("window-halfwidth", int, stats.DEFAULT_WINDOW_HALFWIDTH))
    p.add_argument("--min-support", type=int,
                   default=_env("min-support", int, stats.DEFAULT_MIN_SUPPORT))
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="generate a synthetic disrupted corpus")
    p.add_argument("--sessions", type=int, default=_env("sessions", int, 40))
    p.add_argument("--utterances-per-session", type=int,
                   default=_env("utterances-per-session", int, 8))
    p.add_argument("--severity", type=float, default=_env("severity", float, 0.5))
    p.add_argument("--gradient", action="store_true",
                   help="scale severity with each session's BPRS total")
    p.add_argument("--p-repeat", type=float, default=0.3)
    p.add_argument("--p-insert", type=float, default=0.1)
    p.add_argument("--p-intrude", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=_env("seed", int, 7))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
