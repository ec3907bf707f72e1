"""Client for an external provider process speaking the bridge protocol.

The bridge is any command that reads one JSON request per line on stdin
and writes exactly one JSON response per line on stdout, in order:

  request:  {"id": int, "kind": "handshake"|"logprob"|"embed", "payload": {...}}
  response: {"id": int, "ok": bool, "value": ..., "detail": null|object}

logprob payloads carry {"context": [words], "target": word}; embed payloads
carry {"sentence": "space joined words"}.  The handshake response value
announces provider name, log base (must be natural), embedding dimension
and the maximum context length in tokens.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
from dataclasses import dataclass
from typing import Sequence

from .embed import Embedding


class BridgeError(RuntimeError):
    """Protocol violation or failure reported by the bridge process."""


@dataclass(frozen=True)
class BridgeCapabilities:
    provider: str
    log_base: str
    embedding_dimension: int
    max_context_tokens: int | None


class BridgeClient:
    """Spawns the bridge command and issues strictly ordered requests."""

    def __init__(self, command: str):
        self.command = command
        self.process = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
        )
        self._next_id = 0
        self.capabilities = self._handshake()

    def request(self, kind: str, payload: dict) -> tuple[object, object]:
        """One request, one response; returns (value, detail)."""
        if self.process.poll() is not None:
            raise BridgeError(f"bridge process exited with code {self.process.returncode}")
        request_id = self._next_id
        self._next_id += 1
        line = json.dumps(
            {"id": request_id, "kind": kind, "payload": payload}, ensure_ascii=False
        )
        try:
            self.process.stdin.write(line + "\n")
            self.process.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeError(f"bridge pipe closed: {exc}") from exc
        response_line = self.process.stdout.readline()
        if not response_line:
            raise BridgeError("bridge closed its output without responding")
        try:
            response = json.loads(response_line)
        except json.JSONDecodeError as exc:
            raise BridgeError(f"bridge sent invalid JSON: {exc.msg}") from exc
        if response.get("id") != request_id:
            raise BridgeError(
                f"bridge response id {response.get('id')!r} does not match request {request_id}"
            )
        if not response.get("ok"):
            raise BridgeError(f"bridge error: {response.get('detail')!r}")
        return response.get("value"), response.get("detail")

    def _handshake(self) -> BridgeCapabilities:
        value, _ = self.request("handshake", {})
        try:
            caps = BridgeCapabilities(
                provider=str(value["provider"]),
                log_base=str(value["log_base"]),
                embedding_dimension=int(value["embedding_dimension"]),
                max_context_tokens=(
                    None
                    if value.get("max_context_tokens") is None
                    else int(value["max_context_tokens"])
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BridgeError(f"malformed handshake value {value!r}") from exc
        if caps.log_base != "natural":
            raise BridgeError(f"bridge reports log base {caps.log_base!r}, need natural")
        return caps

    def logprob(self, context: Sequence[str], target: str) -> float:
        value, _ = self.request("logprob", {"context": list(context), "target": target})
        try:
            logprob = float(value)
        except (TypeError, ValueError) as exc:
            raise BridgeError(f"bridge logprob value {value!r} is not a number") from exc
        if not math.isfinite(logprob) or logprob > 0.0:
            raise BridgeError(f"bridge logprob {logprob!r} violates the contract")
        return logprob

    def embed(self, sentence: str) -> list[float]:
        value, _ = self.request("embed", {"sentence": sentence})
        if not isinstance(value, list):
            raise BridgeError(f"bridge embed value must be a list, got {type(value)}")
        vector = [float(x) for x in value]
        expected = self.capabilities.embedding_dimension
        if len(vector) != expected:
            raise BridgeError(f"bridge vector has dimension {len(vector)}, announced {expected}")
        return vector

    def close(self) -> None:
        if self.process.poll() is None:
            try:
                self.process.stdin.close()
            except OSError:
                pass
            try:
                self.process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.process.kill()
                self.process.wait()
        if self.process.stdout is not None:
            self.process.stdout.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


class BridgeLogProbProvider:
    """TokenProbabilityProvider backed by a bridge process (serial)."""

    log_base = "natural"
    concurrent_safe = False

    def __init__(self, client: BridgeClient):
        self.client = client
        self.name = f"bridge:{client.capabilities.provider}"
        self.max_context = client.capabilities.max_context_tokens

    def log_prob(self, context: Sequence[str], target: str) -> float:
        return self.client.logprob(context, target)


class BridgeEmbeddingProvider:
    """EmbeddingProvider backed by a bridge process (serial)."""

    concurrent_safe = False

    def __init__(self, client: BridgeClient):
        self.client = client
        self.name = f"bridge:{client.capabilities.provider}"
        self.dim = client.capabilities.embedding_dimension

    def embed(self, tokens, session_id=None, utterance_index=None, sentence_index=None):
        vector = self.client.embed(" ".join(tokens))
        return Embedding(
            dim=self.dim, weights={i: x for i, x in enumerate(vector) if x != 0.0}
        )
