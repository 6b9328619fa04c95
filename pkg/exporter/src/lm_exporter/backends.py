"""Embedding backends.

``hash:<dim>[:seed]`` is the deterministic, dependency-free backend used in
tests and toy runs: every token maps to a seeded hash-derived unit vector
and a sentence is the mean of its token vectors.

``sbert:<model>`` (sentence-transformers) and ``hf:<model>`` (transformers
hidden states) run real pre-trained encoders; they are optional extras and
load lazily. ``hf`` exposes a pooling flag because pre-trained decoders do
not define a canonical sentence vector.
"""

from __future__ import annotations

import hashlib

import numpy as np


class EmbeddingBackend:
    name: str
    dim: int
    deterministic: bool = True

    def encode(self, tokens: list[str]) -> tuple[np.ndarray, np.ndarray]:
        """Return (sentence_vec, token_vecs) as float32."""
        raise NotImplementedError

    def tokenize(self, text: str) -> list[str]:
        return text.split()


class HashBackend(EmbeddingBackend):
    """Deterministic bag-of-hash-vectors encoder."""

    def __init__(self, dim: int, seed: int = 0):
        self.name = f"hash:{dim}:{seed}"
        self.dim = dim
        self.seed = seed

    def _token_vec(self, token: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.seed}:{token}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        v = rng.standard_normal(self.dim)
        return (v / np.linalg.norm(v)).astype(np.float32)

    def encode(self, tokens: list[str]) -> tuple[np.ndarray, np.ndarray]:
        if not tokens:
            raise ValueError("cannot embed an empty token list")
        token_vecs = np.stack([self._token_vec(t) for t in tokens])
        acc = np.add.reduce(token_vecs.astype(np.float64), axis=0)
        sentence = (acc / len(tokens)).astype(np.float32)
        return sentence, token_vecs


class SbertBackend(EmbeddingBackend):
    """Sentence-transformers encoder (sentence vectors only)."""

    def __init__(self, model_name: str):
        from sentence_transformers import SentenceTransformer

        self.name = f"sbert:{model_name}"
        self._model = SentenceTransformer(model_name)
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, tokens: list[str]) -> tuple[np.ndarray, np.ndarray]:
        if not tokens:
            raise ValueError("cannot embed an empty token list")
        sentence = self._model.encode(
            " ".join(tokens), convert_to_numpy=True, normalize_embeddings=False
        ).astype(np.float32)
        # no per-token states from the pooled API; tile so word-level callers fail loudly
        return sentence, np.tile(sentence, (len(tokens), 1))


class HfBackend(EmbeddingBackend):
    """Raw transformers encoder: last hidden state per token, pooled for the
    sentence vector (``pooling`` = mean | last)."""

    def __init__(self, model_name: str, pooling: str = "mean"):
        import torch
        from transformers import AutoModel, AutoTokenizer

        if pooling not in ("mean", "last"):
            raise ValueError("pooling must be mean|last")
        self.name = f"hf:{model_name}"
        self.pooling = pooling
        self._torch = torch
        self._tokenizer = AutoTokenizer.from_pretrained(model_name)
        self._model = AutoModel.from_pretrained(model_name)
        self._model.eval()
        self.dim = int(self._model.config.hidden_size)

    def tokenize(self, text: str) -> list[str]:
        return self._tokenizer.tokenize(text)

    def encode(self, tokens: list[str]) -> tuple[np.ndarray, np.ndarray]:
        if not tokens:
            raise ValueError("cannot embed an empty token list")
        ids = self._tokenizer.convert_tokens_to_ids(tokens)
        with self._torch.no_grad():
            out = self._model(input_ids=self._torch.tensor([ids]))
        hidden = out.last_hidden_state[0].numpy().astype(np.float32)
        sentence = hidden.mean(axis=0) if self.pooling == "mean" else hidden[-1]
        return sentence.astype(np.float32), hidden


def make_backend(spec: str, pooling: str = "mean") -> EmbeddingBackend:
    """Backend from a spec string: hash:<dim>[:seed], sbert:<model>, hf:<model>."""
    kind, _, rest = spec.partition(":")
    if kind == "hash":
        parts = rest.split(":") if rest else []
        if not parts or not parts[0]:
            raise ValueError("hash backend needs a dimension, e.g. hash:64")
        dim = int(parts[0])
        seed = int(parts[1]) if len(parts) > 1 else 0
        return HashBackend(dim, seed)
    if kind == "sbert":
        return SbertBackend(rest)
    if kind == "hf":
        return HfBackend(rest, pooling=pooling)
    raise ValueError(f"unknown backend spec {spec!r} (want hash:|sbert:|hf:)")
