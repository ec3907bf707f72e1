"""Deterministic stub backend: optional lookup table, hashed fallback.

Table file (JSON): {"logprobs": {"<context words>|||<target>": value},
"embeddings": {"<sentence>": [floats]}, "dimension": d}.  Requests not in
the table get hash-derived values, so the stub answers anything and two
runs always agree.  Words of eight or more characters split into two fake
subword pieces whose log-probabilities sum to the word value, which gives
the piece-additivity contract something real to check without a neural
model.
"""

from __future__ import annotations

import hashlib
import json
import math

PIECE_SPLIT_LENGTH = 8


def _hash64(text: str, salt: bytes) -> int:
    return int.from_bytes(
        hashlib.blake2b(text.encode("utf-8"), digest_size=8, person=salt.ljust(16, b"\0")).digest(),
        "big",
    )


def _hash_logprob(context_key: str, piece: str) -> float:
    h = _hash64(context_key + "\x1e" + piece, b"sb-logprob")
    return -(0.05 + (h % 100000) / 10000.0)  # in [-10.05, -0.05]


class StubModel:
    name = "stub"

    def __init__(self, table_path: str | None = None, dimension: int = 16,
                 max_context_tokens: int = 256):
        self.logprob_table: dict[str, float] = {}
        self.embedding_table: dict[str, list[float]] = {}
        self.dimension = dimension
        self.max_context_tokens = max_context_tokens
        if table_path:
            with open(table_path, encoding="utf-8") as handle:
                table = json.load(handle)
            self.logprob_table = {k: float(v) for k, v in table.get("logprobs", {}).items()}
            self.embedding_table = {
                k: [float(x) for x in v] for k, v in table.get("embeddings", {}).items()
            }
            if "dimension" in table:
                self.dimension = int(table["dimension"])
        for key, value in self.logprob_table.items():
            if not math.isfinite(value) or value > 0.0:
                raise ValueError(f"table logprob for {key!r} must be finite and <= 0")

    def pieces(self, word: str) -> list[str]:
        if len(word) >= PIECE_SPLIT_LENGTH:
            half = len(word) // 2
            return [word[:half], word[half:]]
        return [word]

    def word_logprob(self, context: list[str], target: str) -> tuple[float, dict]:
        detail: dict = {}
        if len(context) > self.max_context_tokens:
            context = context[len(context) - self.max_context_tokens :]
            detail["truncated"] = True
        context_key = " ".join(context)
        table_key = f"{context_key}|||{target}"
        if table_key in self.logprob_table:
            value = self.logprob_table[table_key]
            detail["pieces"] = [[target, value]]
            return value, detail
        piece_values = []
        running = context_key
        for piece in self.pieces(target):
            piece_values.append([piece, _hash_logprob(running, piece)])
            running = running + " " + piece
        detail["pieces"] = piece_values
        return math.fsum(v for _, v in piece_values), detail

    def embed(self, sentence: str) -> list[float]:
        if sentence in self.embedding_table:
            vector = self.embedding_table[sentence]
            if len(vector) != self.dimension:
                raise ValueError(
                    f"table vector for {sentence!r} has dimension {len(vector)}, "
                    f"expected {self.dimension}"
                )
            return vector
        components = [
            (_hash64(sentence, f"sb-emb-{i}".encode()) % 2001 - 1000) / 1000.0
            for i in range(self.dimension)
        ]
        norm = math.sqrt(math.fsum(x * x for x in components)) or 1.0
        return [x / norm for x in components]
