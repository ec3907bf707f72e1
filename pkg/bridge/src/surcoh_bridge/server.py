"""Request loop and wiring for the bridge server.

Requests arrive one JSON object per line and are answered strictly in
order.  ok=false responses carry {"error": ...} in detail; a request the
server cannot even parse is answered with id null.  Fatal conditions
(model load failure) exit nonzero with a message on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import socket
import sys

from . import __version__
from .stub import StubModel


def _build_model(spec: str, args):
    kind, _, detail = spec.partition(":")
    if kind == "stub":
        return StubModel(
            table_path=detail or None,
            dimension=args.dim,
            max_context_tokens=args.max_context,
        )
    if kind == "gpt2":
        from .gpt2 import Gpt2Model

        return Gpt2Model(model_name=detail or "gpt2", pooling=args.pooling)
    raise RuntimeError(f"unknown model spec {spec!r} (use stub[:table.json] or gpt2[:name])")


def _capabilities(model) -> dict:
    return {
        "provider": model.name,
        "log_base": "natural",
        "embedding_dimension": model.dimension,
        "max_context_tokens": model.max_context_tokens,
    }


def _error(request_id, message: str) -> dict:
    return {"id": request_id, "ok": False, "value": None, "detail": {"error": message}}


def handle_line(line: str, model, debug: bool) -> dict:
    try:
        request = json.loads(line)
    except json.JSONDecodeError as exc:
        return _error(None, f"invalid JSON request: {exc.msg}")
    if not isinstance(request, dict):
        return _error(None, "request must be a JSON object")
    request_id = request.get("id")
    kind = request.get("kind")
    payload = request.get("payload") or {}

    try:
        if kind == "handshake":
            return {"id": request_id, "ok": True, "value": _capabilities(model),
                    "detail": None}
        if kind == "logprob":
            context = payload["context"]
            target = payload["target"]
            if not isinstance(context, list) or not isinstance(target, str):
                return _error(request_id, "logprob payload needs context list and target word")
            value, detail = model.word_logprob([str(t) for t in context], target)
            if not math.isfinite(value) or value > 0.0:
                return _error(request_id, f"backend produced invalid log-probability {value}")
            if not debug:
                detail.pop("pieces", None)
            return {"id": request_id, "ok": True, "value": value,
                    "detail": detail or None}
        if kind == "embed":
            sentence = payload["sentence"]
            if not isinstance(sentence, str) or not sentence:
                return _error(request_id, "embed payload needs a non-empty sentence string")
            vector = model.embed(sentence)
            return {"id": request_id, "ok": True, "value": vector, "detail": None}
        return _error(request_id, f"unknown request kind {kind!r}")
    except KeyError as exc:
        return _error(request_id, f"payload missing field {exc}")
    except Exception as exc:  # keep serving after a bad request
        return _error(request_id, f"{type(exc).__name__}: {exc}")


def serve(reader, writer, model, debug: bool) -> None:
    for line in reader:
        if not line.strip():
            continue
        response = handle_line(line, model, debug)
        writer.write(json.dumps(response, ensure_ascii=False) + "\n")
        writer.flush()


def serve_socket(path: str, model, debug: bool) -> None:
    server = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
    server.bind(path)
    server.listen(1)
    connection, _ = server.accept()
    with connection:
        reader = connection.makefile("r", encoding="utf-8")
        writer = connection.makefile("w", encoding="utf-8")
        serve(reader, writer, model, debug)
    server.close()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="surcoh-bridge",
        description="surcoh bridge server: log-probabilities and sentence embeddings "
                    "over line-delimited JSON",
    )
    parser.add_argument("--model", default="stub",
                        help="stub[:table.json] or gpt2[:model-name] (default stub)")
    parser.add_argument("--dim", type=int, default=16,
                        help="stub embedding dimension (default 16)")
    parser.add_argument("--max-context", type=int, default=256,
                        help="stub context window in tokens (default 256)")
    parser.add_argument("--pooling", choices=("mean", "first"), default="mean",
                        help="gpt2 sentence pooling (default mean)")
    parser.add_argument("--debug", action="store_true",
                        help="expose subword pieces in response details")
    parser.add_argument("--socket", help="serve one connection on this unix socket "
                                         "instead of stdio")
    parser.add_argument("--version", action="version",
                        version=f"surcoh-bridge {__version__}")
    args = parser.parse_args(argv)

    try:
        model = _build_model(args.model, args)
    except RuntimeError as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return 1

    print(f"surcoh-bridge serving {model.name} (dim {model.dimension})", file=sys.stderr)
    if args.socket:
        serve_socket(args.socket, model, args.debug)
    else:
        serve(sys.stdin, sys.stdout, model, args.debug)
    return 0


if __name__ == "__main__":
    sys.exit(main())
