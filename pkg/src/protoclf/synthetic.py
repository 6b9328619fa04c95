"""Seeded synthetic datasets for desk-scale end-to-end runs.

Two constructions:

* ``two_cluster_dataset`` — sentence-level binary task with well-separated
  Gaussian direction clusters; trainable to ~perfect balanced accuracy.
* ``planted_token_dataset`` — toy-encoded sentences whose class is carried
  by a single planted token on an axis orthogonal to all filler tokens, so
  rationale-removal provably destroys the class signal.
"""

from __future__ import annotations

import numpy as np

from .store import SENTENCE, Dataset, EmbeddedExample, Split, ToyEncoder, mean_pool


def two_cluster_dataset(
    n_train: int = 400,
    n_val: int = 100,
    n_test: int = 100,
    dim: int = 8,
    seed: int = 0,
    center_scale: float = 3.0,
    noise: float = 0.2,
) -> Dataset:
    """Binary sentence-level task: class c points scatter around a fixed
    direction +/-mu with isotropic noise."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC1]))
    mu = np.zeros(dim)
    mu[0] = center_scale
    total = n_train + n_val + n_test
    examples = []
    for i in range(total):
        label = i % 2
        center = mu if label == 1 else -mu
        vec = (center + noise * rng.standard_normal(dim)).astype(np.float32)
        examples.append(
            EmbeddedExample(
                id=f"e{i}",
                label=label,
                text=f"synthetic cluster sample {i} class {label}",
                tokens=["synthetic", "cluster", "sample", str(i), "class", str(label)],
                sentence_vec=vec,
            )
        )
    split = Split(
        train=np.arange(0, n_train),
        val=np.arange(n_train, n_train + n_val),
        test=np.arange(n_train + n_val, total),
    )
    return Dataset(mode=SENTENCE, dim=dim, classes=2, examples=examples, split=split)


def class_centroids(dataset: Dataset) -> np.ndarray:
    """Mean training embedding per class."""
    train = dataset.subset(dataset.split.train)
    cents = np.zeros((dataset.classes, dataset.dim))
    for c in range(dataset.classes):
        rows = np.stack([ex.sentence_vec for ex in train if ex.label == c])
        cents[c] = mean_pool(rows)
    return cents


PLANTED_TOKENS = ("plantzero", "plantone")


def planted_token_encoder(dim: int = 16, seed: int = 0, strength: float = 8.0) -> ToyEncoder:
    """Toy encoder whose table pins the two planted tokens to strong
    orthogonal axes; every other token hashes to a unit vector that is then
    zeroed on those axes, so fillers carry no class signal."""
    table = {}
    for c, tok in enumerate(PLANTED_TOKENS):
        v = np.zeros(dim, dtype=np.float32)
        v[c] = strength
        table[tok] = v
    return _AxisFreeToyEncoder(dim=dim, table=table, seed=seed, reserved_axes=(0, 1))


class _AxisFreeToyEncoder(ToyEncoder):
    """ToyEncoder that keeps hashed (out-of-table) token vectors off the
    reserved class axes."""

    def __init__(self, dim, table, seed, reserved_axes):
        super().__init__(dim=dim, table=table, seed=seed)
        self.reserved_axes = reserved_axes

    def encode(self, tokens):
        from .store import toy_encode

        sentence_vec, token_vecs = toy_encode(tokens, self.table, self.dim, self.seed)
        planted = np.array([t in self.table for t in tokens])
        if not planted.all():
            token_vecs = token_vecs.copy()
            for i, is_planted in enumerate(planted):
                if not is_planted:
                    token_vecs[i, list(self.reserved_axes)] = 0.0
                    norm = np.linalg.norm(token_vecs[i])
                    if norm > 0:
                        token_vecs[i] /= norm
            sentence_vec = mean_pool(token_vecs).astype(np.float32)
        return sentence_vec, token_vecs


def planted_token_dataset(
    n_train: int = 200,
    n_val: int = 50,
    n_test: int = 50,
    dim: int = 16,
    seed: int = 0,
    min_len: int = 5,
    max_len: int = 9,
    strength: float = 8.0,
) -> tuple[Dataset, ToyEncoder, dict[str, list[bool]]]:
    """Sentence-level task where one planted token decides the class.

    Returns the dataset, the encoder that produced it (novel-text capable,
    for perturbations), and the gold rationale mask per example id (True
    exactly at the planted token).
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF1]))
    encoder = planted_token_encoder(dim=dim, seed=seed, strength=strength)
    fillers = [f"filler{w}" for w in range(40)]
    total = n_train + n_val + n_test
    examples = []
    rationales: dict[str, list[bool]] = {}
    for i in range(total):
        label = i % 2
        length = int(rng.integers(min_len, max_len + 1))
        tokens = [fillers[int(w)] for w in rng.integers(0, len(fillers), size=length)]
        pos = int(rng.integers(0, length))
        tokens[pos] = PLANTED_TOKENS[label]
        sentence_vec, _ = encoder.encode(tokens)
        examples.append(
            EmbeddedExample(
                id=f"p{i}",
                label=label,
                text=" ".join(tokens),
                tokens=tokens,
                sentence_vec=sentence_vec,
            )
        )
        rationales[f"p{i}"] = [k == pos for k in range(length)]
    split = Split(
        train=np.arange(0, n_train),
        val=np.arange(n_train, n_train + n_val),
        test=np.arange(n_train + n_val, total),
    )
    dataset = Dataset(mode=SENTENCE, dim=dim, classes=2, examples=examples, split=split)
    return dataset, encoder, rationales
