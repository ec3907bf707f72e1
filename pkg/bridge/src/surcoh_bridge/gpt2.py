"""GPT-2 backend: next-token log-probabilities (natural log) and sentence
embeddings from the final hidden states.

A word's log-probability is the sum of its subword pieces' log
probabilities, each piece conditioned on the running context plus the
earlier pieces of the same word.  Contexts beyond the model window are
truncated from the left and flagged in the response detail.
"""

from __future__ import annotations

import math


class Gpt2Model:
    def __init__(self, model_name: str = "gpt2", pooling: str = "mean"):
        try:
            import torch
            from transformers import GPT2LMHeadModel, GPT2TokenizerFast
        except ImportError as exc:
            raise RuntimeError(
                "the gpt2 backend needs the transformers and torch packages "
                "(install surcoh-bridge[gpt2])"
            ) from exc
        if pooling not in ("mean", "first"):
            raise ValueError(f"unknown pooling {pooling!r} (choose mean or first)")
        try:
            self.tokenizer = GPT2TokenizerFast.from_pretrained(model_name)
            self.model = GPT2LMHeadModel.from_pretrained(model_name)
        except Exception as exc:
            raise RuntimeError(f"failed to load model {model_name!r}: {exc}") from exc
        self.model.eval()
        self.torch = torch
        self.pooling = pooling
        self.name = model_name
        self.dimension = self.model.config.n_embd
        self.max_context_tokens = self.model.config.n_positions // 2  # word budget

    def _encode_context(self, context: list[str]) -> list[int]:
        if not context:
            return [self.tokenizer.eos_token_id]
        return [self.tokenizer.eos_token_id] + self.tokenizer.encode(" ".join(context))

    def pieces(self, word: str) -> list[str]:
        ids = self.tokenizer.encode(" " + word)
        return [self.tokenizer.decode([i]) for i in ids]

    def word_logprob(self, context: list[str], target: str) -> tuple[float, dict]:
        torch = self.torch
        detail: dict = {}
        ctx_ids = self._encode_context(context)
        target_ids = self.tokenizer.encode(" " + target)
        window = self.model.config.n_positions
        if len(ctx_ids) + len(target_ids) > window:
            keep = window - len(target_ids)
            ctx_ids = ctx_ids[len(ctx_ids) - keep :]
            detail["truncated"] = True
        input_ids = torch.tensor([ctx_ids + target_ids])
        with torch.no_grad():
            logits = self.model(input_ids).logits[0]
        log_probs = torch.log_softmax(logits, dim=-1)
        piece_values = []
        for i, piece_id in enumerate(target_ids):
            position = len(ctx_ids) + i - 1
            value = float(log_probs[position, piece_id])
            piece_values.append([self.tokenizer.decode([piece_id]), value])
        detail["pieces"] = piece_values
        return math.fsum(v for _, v in piece_values), detail

    def embed(self, sentence: str) -> list[float]:
        torch = self.torch
        ids = self.tokenizer.encode(sentence)[: self.model.config.n_positions]
        if not ids:
            ids = [self.tokenizer.eos_token_id]
        input_ids = torch.tensor([ids])
        with torch.no_grad():
            hidden = self.model(input_ids, output_hidden_states=True).hidden_states[-1][0]
        if self.pooling == "mean":
            vector = hidden.mean(dim=0)
        else:
            vector = hidden[0]
        return [float(x) for x in vector]
