"""Transcript ingestion: session assembly, sentence segmentation, word tokens.

Corpus files are UTF-8 JSON lines, one utterance per line, with the fields
session_id, subject_id, diagnosis, bprs_total, utterance_index, speaker and
text.  Interviewer lines are kept in the file format but never scored; only
subject speech is segmented into sentences and word tokens.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

DIAGNOSES = ("HC", "SZ", "MDD")
SPEAKERS = ("subject", "interviewer")
BPRS_MIN, BPRS_MAX = 18, 126

# A terminator splits a sentence only when the token before it is not one of
# these.  The list is fixed so segmentation stays deterministic.
ABBREVIATIONS = frozenset({"mr", "mrs", "ms", "dr", "st", "etc", "e.g", "i.e", "vs"})

_WORD_RE = re.compile(r"[^\W_]+(?:['’-][^\W_]+)*")
_TERMINATOR_RE = re.compile(r"[.!?]")
_TRAILING_RUN_RE = re.compile(r"\S*$")

_RECORD_FIELDS = (
    "session_id",
    "subject_id",
    "diagnosis",
    "bprs_total",
    "utterance_index",
    "speaker",
    "text",
)


class CorpusFormatError(ValueError):
    """Malformed corpus input; the message names the offending line."""


@dataclass(frozen=True)
class TranscriptRecord:
    """One raw transcript line before session assembly."""

    session_id: str
    subject_id: str
    diagnosis: str
    bprs_total: int | None
    utterance_index: int
    speaker: str
    text: str


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    raw: str


@dataclass(frozen=True)
class Utterance:
    sentences: tuple[Sentence, ...]
    session_id: str
    utterance_index: int

    def words(self) -> list[str]:
        """All word tokens of the utterance in order, across sentences."""
        return [tok for sent in self.sentences for tok in sent.tokens]


@dataclass(frozen=True)
class Session:
    session_id: str
    subject_id: str
    diagnosis: str
    bprs_total: int | None
    utterances: tuple[Utterance, ...]


@dataclass(frozen=True)
class CorpusFilter:
    """Inclusion filter applied while loading.

    ``bprs_range=None`` disables severity filtering; with a range set,
    sessions without a BPRS total are dropped as well, so every surviving
    session verifiably satisfies the range predicate.
    """

    diagnoses: frozenset[str] = frozenset({"HC", "SZ"})
    bprs_range: tuple[int, int] | None = (18, 67)


DEFAULT_FILTER = CorpusFilter()


def tokenize_words(text: str) -> list[str]:
    """Lowercased word tokens; intra-word apostrophes/hyphens are kept."""
    return _WORD_RE.findall(text.lower())


def _split_offsets(text: str) -> list[int]:
    offsets = []
    for match in _TERMINATOR_RE.finditer(text):
        end = match.end()
        if end < len(text) and not text[end].isspace():
            continue
        run = _TRAILING_RUN_RE.search(text[: match.start()]).group(0)
        token = re.sub(r"^\W+", "", run).lower()
        if token in ABBREVIATIONS:
            continue
        offsets.append(end)
    return offsets


def segment_sentences(text: str) -> list[Sentence]:
    """Split text at '.', '!' or '?' followed by whitespace or end-of-text.

    The split is suppressed after a known abbreviation.  Text without any
    terminator is a single sentence.  Segments that contain no word tokens
    (stray punctuation) are dropped.
    """
    if not text.strip():
        raise ValueError("cannot segment empty or whitespace-only text")
    offsets = _split_offsets(text)
    spans = []
    start = 0
    for end in offsets:
        spans.append(text[start:end])
        start = end
    if start < len(text):
        spans.append(text[start:])
    sentences = []
    for span in spans:
        raw = span.strip()
        tokens = tokenize_words(raw)
        if tokens:
            sentences.append(Sentence(tokens=tuple(tokens), raw=raw))
    if not sentences:
        raise ValueError("text contains no word tokens")
    return sentences


def _parse_record(line: str, lineno: int) -> TranscriptRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise CorpusFormatError(f"line {lineno}: record must be a JSON object")
    missing = [k for k in _RECORD_FIELDS if k not in obj]
    if missing:
        raise CorpusFormatError(f"line {lineno}: missing fields {missing}")

    diagnosis = obj["diagnosis"]
    if diagnosis not in DIAGNOSES:
        raise CorpusFormatError(
            f"line {lineno}: unknown diagnosis {diagnosis!r} (expected one of {DIAGNOSES})"
        )
    speaker = obj["speaker"]
    if speaker not in SPEAKERS:
        raise CorpusFormatError(
            f"line {lineno}: unknown speaker {speaker!r} (expected one of {SPEAKERS})"
        )
    bprs = obj["bprs_total"]
    if bprs is not None:
        if not isinstance(bprs, int) or isinstance(bprs, bool):
            raise CorpusFormatError(f"line {lineno}: bprs_total must be an integer or null")
        if not BPRS_MIN <= bprs <= BPRS_MAX:
            raise CorpusFormatError(
                f"line {lineno}: bprs_total {bprs} outside scale bounds [{BPRS_MIN},{BPRS_MAX}]"
            )
    idx = obj["utterance_index"]
    if not isinstance(idx, int) or isinstance(idx, bool) or idx < 0:
        raise CorpusFormatError(f"line {lineno}: utterance_index must be a non-negative integer")
    text = obj["text"]
    if not isinstance(text, str) or not text.strip():
        raise CorpusFormatError(f"line {lineno}: text must be a non-empty string")
    for key in ("session_id", "subject_id"):
        if not isinstance(obj[key], str) or not obj[key]:
            raise CorpusFormatError(f"line {lineno}: {key} must be a non-empty string")

    return TranscriptRecord(
        session_id=obj["session_id"],
        subject_id=obj["subject_id"],
        diagnosis=diagnosis,
        bprs_total=bprs,
        utterance_index=idx,
        speaker=speaker,
        text=text,
    )


def iter_records(path: str | Path) -> Iterator[tuple[int, TranscriptRecord]]:
    """Yield (lineno, record) for every non-blank line of a corpus file."""
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            yield lineno, _parse_record(line, lineno)


def load_corpus(path: str | Path, corpus_filter: CorpusFilter = DEFAULT_FILTER) -> list[Session]:
    """Load a corpus file into filtered, ordered sessions of subject speech.

    Sessions keep file order of first appearance; utterances are ordered by
    utterance_index.  Records whose diagnosis is excluded by the filter are
    dropped; with a BPRS range active, sessions outside the range (or with
    no BPRS total) are dropped after assembly.
    """
    meta: dict[str, TranscriptRecord] = {}
    subject_lines: dict[str, dict[int, tuple[int, TranscriptRecord]]] = {}
    order: list[str] = []

    for lineno, rec in iter_records(path):
        if rec.diagnosis not in corpus_filter.diagnoses:
            continue
        sid = rec.session_id
        if sid not in meta:
            meta[sid] = rec
            subject_lines[sid] = {}
            order.append(sid)
        else:
            first = meta[sid]
            for attr in ("subject_id", "diagnosis", "bprs_total"):
                if getattr(first, attr) != getattr(rec, attr):
                    raise CorpusFormatError(
                        f"line {lineno}: session {sid!r} has conflicting {attr} "
                        f"({getattr(first, attr)!r} vs {getattr(rec, attr)!r})"
                    )
        if rec.speaker != "subject":
            continue
        if rec.utterance_index in subject_lines[sid]:
            prev_line = subject_lines[sid][rec.utterance_index][0]
            raise CorpusFormatError(
                f"line {lineno}: duplicate utterance_index {rec.utterance_index} "
                f"for session {sid!r} (first seen on line {prev_line})"
            )
        subject_lines[sid][rec.utterance_index] = (lineno, rec)

    sessions = []
    for sid in order:
        first = meta[sid]
        if corpus_filter.bprs_range is not None:
            lo, hi = corpus_filter.bprs_range
            if first.bprs_total is None or not lo <= first.bprs_total <= hi:
                continue
        utterances = []
        for idx in sorted(subject_lines[sid]):
            lineno, rec = subject_lines[sid][idx]
            try:
                sentences = segment_sentences(rec.text)
            except ValueError as exc:
                raise CorpusFormatError(f"line {lineno}: {exc}") from exc
            utterances.append(
                Utterance(sentences=tuple(sentences), session_id=sid, utterance_index=idx)
            )
        if utterances:
            sessions.append(
                Session(
                    session_id=sid,
                    subject_id=first.subject_id,
                    diagnosis=first.diagnosis,
                    bprs_total=first.bprs_total,
                    utterances=tuple(utterances),
                )
            )
    return sessions


def corpus_sentences(sessions: Iterable[Session]) -> list[list[str]]:
    """All sentences of the corpus as token lists (LM/LDA training input)."""
    return [
        list(sent.tokens)
        for session in sessions
        for utt in session.utterances
        for sent in utt.sentences
    ]


def corpus_documents(sessions: Iterable[Session]) -> list[list[str]]:
    """One token list per utterance (topic-model training input)."""
    return [utt.words() for session in sessions for utt in session.utterances]


def session_records(session: Session) -> Iterator[dict]:
    """Re-emit a session as corpus-file records (subject speech only)."""
    for utt in session.utterances:
        yield {
            "session_id": session.session_id,
            "subject_id": session.subject_id,
            "diagnosis": session.diagnosis,
            "bprs_total": session.bprs_total,
            "utterance_index": utt.utterance_index,
            "speaker": "subject",
            "text": " ".join(sent.raw for sent in utt.sentences),
        }


def write_corpus(sessions: Iterable[Session], path: str | Path) -> None:
    """Write sessions to a corpus file (deterministic, one record per line)."""
    with open(path, "w", encoding="utf-8") as handle:
        for session in sessions:
            for record in session_records(session):
                handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
                handle.write("\n")
