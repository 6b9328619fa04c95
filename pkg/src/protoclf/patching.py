"""Similarity functions and word-level patch generation.

A patch is a strictly increasing set of k token indices pooled to one
vector (the mean of the member token vectors), so patches of any length
live in the same space as the prototypes. Three selectors produce patch
sets: exhaustive enumeration, sliding windows with dilation, and
self-attention filtering of the most attended-to tokens.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimMismatch, EnumerationOverflow, TooShort, ZeroVector
from .store import mean_pool

COSINE = "cosine"
NEG_L2 = "neg_l2"
SIM_KINDS = (COSINE, NEG_L2)

BRUTE_FORCE = "brute_force"
SLIDING = "sliding"
ATTENTION = "attention"

ENUMERATION_CAP = 10**6


@dataclass(frozen=True)
class Patch:
    """k token positions of one example, pooled to a single vector."""

    token_indices: tuple[int, ...]
    vec: np.ndarray


@dataclass(frozen=True)
class SelectorConfig:
    """How word-level inputs are carved into patches.

    ``dilation`` applies to sliding windows only; ``k_lim`` caps the number
    of attention-selected tokens.
    """

    kind: str = SLIDING
    k: int = 4
    dilation: int = 0
    k_lim: int = 10

    def __post_init__(self):
        if self.kind not in (BRUTE_FORCE, SLIDING, ATTENTION):
            raise ValueError(f"unknown selector kind {self.kind!r}")
        if self.k < 1:
            raise ValueError("prototype length k must be >= 1")
        if self.dilation < 0:
            raise ValueError("dilation must be >= 0")
        if self.k_lim < self.k:
            raise ValueError("k_lim must be >= k")

    def as_dict(self) -> dict:
        return {"kind": self.kind, "k": self.k, "dilation": self.dilation, "k_lim": self.k_lim}

    @staticmethod
    def from_dict(d: dict) -> "SelectorConfig":
        return SelectorConfig(
            kind=d["kind"], k=d["k"], dilation=d["dilation"], k_lim=d["k_lim"]
        )


def similarity(a: np.ndarray, b: np.ndarray, kind: str) -> float:
    """Similarity between two vectors: cosine or negated L2 distance."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"vector shapes differ: {a.shape} vs {b.shape}")
    if kind == COSINE:
        na = np.linalg.norm(a)
        nb = np.linalg.norm(b)
        if na == 0.0 or nb == 0.0:
            raise ZeroVector("cosine similarity of a zero vector is undefined")
        return float(a @ b / (na * nb))
    if kind == NEG_L2:
        return float(-np.linalg.norm(a - b))
    raise ValueError(f"unknown similarity kind {kind!r}")


def pairwise_similarity(a: np.ndarray, b: np.ndarray, kind: str) -> np.ndarray:
    """Similarity between every row of ``a`` and every row of ``b``.

    Dispatches to the active kernel backend (compiled when available).
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise DimMismatch(f"row dims differ: {a.shape[1]} vs {b.shape[1]}")
    if kind == COSINE:
        if (np.linalg.norm(a, axis=1) == 0).any() or (np.linalg.norm(b, axis=1) == 0).any():
            raise ZeroVector("cosine similarity of a zero vector is undefined")
        return kernels.pairwise_cosine(a, b)
    if kind == NEG_L2:
        return kernels.pairwise_neg_l2(a, b)
    raise ValueError(f"unknown similarity kind {kind!r}")


def _pool(token_vecs: np.ndarray, indices: tuple[int, ...]) -> np.ndarray:
    return mean_pool(token_vecs[list(indices)])


def enumerate_patches(token_vecs: np.ndarray, k: int, cap: int = ENUMERATION_CAP) -> list[Patch]:
    """All C(l, k) index combinations in lexicographic order."""
    l = token_vecs.shape[0]
    if l < k:
        raise TooShort(f"sequence length {l} < patch length {k}")
    count = math.comb(l, k)
    if count > cap:
        raise EnumerationOverflow(f"C({l},{k}) = {count} exceeds enumeration cap {cap}")
    return [
        Patch(combo, _pool(token_vecs, combo))
        for combo in itertools.combinations(range(l), k)
    ]


def sliding_patches(token_vecs: np.ndarray, k: int, dilation: int = 0) -> list[Patch]:
    """Stride-1 windows of k tokens with ``dilation`` skipped positions
    between selected tokens."""
    l = token_vecs.shape[0]
    step = dilation + 1
    span = 1 + (k - 1) * step
    if l < span:
        raise TooShort(
            f"sequence length {l} < window span {span} (k={k}, dilation={dilation})"
        )
    patches = []
    for start in range(l - span + 1):
        indices = tuple(start + t * step for t in range(k))
        patches.append(Patch(indices, _pool(token_vecs, indices)))
    return patches


def attention_scores(token_vecs: np.ndarray) -> np.ndarray:
    """Mean attention received per token under a single parameter-free
    self-attention head: A = row_softmax(E E^T / sqrt(d)), score = column mean.

    The token embeddings themselves are never modified.
    """
    e = np.asarray(token_vecs, dtype=np.float64)
    logits = (e @ e.T) / math.sqrt(e.shape[1])
    logits -= logits.max(axis=1, keepdims=True)
    attn = np.exp(logits)
    attn /= attn.sum(axis=1, keepdims=True)
    return attn.mean(axis=0)


def attention_select(
    token_vecs: np.ndarray, cfg: SelectorConfig
) -> tuple[np.ndarray, list[Patch]]:
    """Keep the n_w = min(k_lim, 2k) most attended-to tokens (ties to the
    lower index), then form all C(n_w, k) patches over them, original token
    order preserved."""
    l = token_vecs.shape[0]
    if l < cfg.k:
        raise TooShort(f"sequence length {l} < patch length {cfg.k}")
    n_w = min(cfg.k_lim, 2 * cfg.k, l)
    scores = attention_scores(token_vecs)
    # stable sort on negated scores keeps the lower index on ties
    order = np.argsort(-scores, kind="stable")
    selected = np.sort(order[:n_w])
    patches = [
        Patch(combo, _pool(token_vecs, combo))
        for combo in itertools.combinations(selected.tolist(), cfg.k)
    ]
    return selected, patches


def generate_patches(token_vecs: np.ndarray, cfg: SelectorConfig) -> list[Patch]:
    """Patch set for one example under the configured selector."""
    if cfg.kind == BRUTE_FORCE:
        return enumerate_patches(token_vecs, cfg.k)
    if cfg.kind == SLIDING:
        return sliding_patches(token_vecs, cfg.k, cfg.dilation)
    return attention_select(token_vecs, cfg)[1]


def patch_matrix(patches: list[Patch]) -> np.ndarray:
    """Stack patch vectors into a (num_patches, d) float64 matrix."""
    return np.stack([p.vec for p in patches])
