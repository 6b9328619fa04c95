"""The interpretable model: prototype layer, class-masked nonnegative linear
head, forward pass, explanation extraction, and nearest-neighbor projection.

Classification and explanation share one code path: the per-prototype
similarity vector ``s`` that produces the logits is the same vector reported
in every explanation, so explanations are faithful to the prediction by
construction.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigInvalid, DimMismatch, EmptyClass, EmptyDataset, MagicMismatch
from .patching import (
    SIM_KINDS,
    SelectorConfig,
    generate_patches,
    pairwise_similarity,
    patch_matrix,
)
from .store import SENTENCE, WORD, Dataset, EmbeddedExample

CHECKPOINT_MAGIC = b"PTCK"
CHECKPOINT_VERSION = 1


@dataclass
class DisplayRef:
    """Human-readable decoding of a prototype: the source training example
    and, for word-level prototypes, the matched token positions."""

    source_id: str
    text: str
    highlight: list[int] | None = None

    def as_dict(self) -> dict:
        d: dict = {"source_id": self.source_id, "text": self.text}
        if self.highlight is not None:
            d["highlight"] = self.highlight
        return d

    @staticmethod
    def from_dict(d: dict | None) -> "DisplayRef | None":
        if d is None:
            return None
        return DisplayRef(d["source_id"], d["text"], d.get("highlight"))


@dataclass
class PrototypeSet:
    """The m trainable prototype vectors with class assignments, frozen
    flags, and display references."""

    vecs: np.ndarray  # (m, d) float64
    class_of: np.ndarray  # (m,) int32
    frozen: np.ndarray  # (m,) bool
    display: list[DisplayRef | None]

    @property
    def m(self) -> int:
        return self.vecs.shape[0]

    @property
    def dim(self) -> int:
        return self.vecs.shape[1]

    def clone(self) -> "PrototypeSet":
        return PrototypeSet(
            self.vecs.copy(),
            self.class_of.copy(),
            self.frozen.copy(),
            [replace(d) if d is not None else None for d in self.display],
        )


@dataclass
class ClassifierHead:
    """Final linear layer without bias. The class mask zeroes every
    off-class connection, and all stored weights stay >= 0 (clamped after
    each optimizer step), so prototypes never act as negative evidence."""

    weights: np.ndarray  # (C, m) float64
    class_mask: np.ndarray  # (C, m) float64 of {0, 1}

    @property
    def classes(self) -> int:
        return self.weights.shape[0]

    def effective(self) -> np.ndarray:
        return self.class_mask * self.weights

    def clone(self) -> "ClassifierHead":
        return ClassifierHead(self.weights.copy(), self.class_mask.copy())

    @staticmethod
    def for_prototypes(class_of: np.ndarray, classes: int) -> "ClassifierHead":
        mask = np.zeros((classes, len(class_of)))
        mask[class_of, np.arange(len(class_of))] = 1.0
        return ClassifierHead(weights=mask.copy(), class_mask=mask)


@dataclass
class ProtoModel:
    """Everything needed to classify and explain: prototypes, head, mode,
    similarity choice, and the word-level selector."""

    mode: str
    sim_kind: str
    selector: SelectorConfig
    protos: PrototypeSet
    head: ClassifierHead
    seed: int = 0
    epoch: int = 0

    def __post_init__(self):
        if self.mode not in (SENTENCE, WORD):
            raise ConfigInvalid(f"mode must be sentence|word, got {self.mode!r}")
        if self.sim_kind not in SIM_KINDS:
            raise ConfigInvalid(f"sim_kind must be one of {SIM_KINDS}, got {self.sim_kind!r}")

    @property
    def m(self) -> int:
        return self.protos.m

    @property
    def dim(self) -> int:
        return self.protos.dim

    @property
    def classes(self) -> int:
        return self.head.classes

    def clone(self) -> "ProtoModel":
        return ProtoModel(
            self.mode,
            self.sim_kind,
            self.selector,
            self.protos.clone(),
            self.head.clone(),
            self.seed,
            self.epoch,
        )


# ---------------------------------------------------------------------------
# forward pass

def example_patch_matrix(example: EmbeddedExample, mode: str, selector: SelectorConfig) -> np.ndarray:
    """The example's comparison vectors: its single sentence embedding, or
    the pooled patch vectors produced by the selector."""
    if mode == SENTENCE:
        return np.asarray(example.sentence_vec, dtype=np.float64)[None, :]
    return patch_matrix(generate_patches(example.token_vecs, selector))


def similarity_profile(
    patches: np.ndarray, protos: PrototypeSet, sim_kind: str
) -> tuple[np.ndarray, np.ndarray]:
    """Per-prototype similarity ``s`` and the index of the patch achieving it.

    ``s[j] = max_z sim(z, p_j)``; ties go to the lowest patch index.
    """
    sims = pairwise_similarity(patches, protos.vecs, sim_kind)
    return sims.max(axis=0), sims.argmax(axis=0)


def forward(
    example: EmbeddedExample,
    model: ProtoModel,
    patches: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Class probabilities and the similarity vector ``s`` for one example.

    ``patches`` may carry a precomputed patch matrix (the vectors never
    change while prototypes train, so callers cache them).
    """
    if patches is None:
        patches = example_patch_matrix(example, model.mode, model.selector)
    if patches.shape[1] != model.dim:
        raise DimMismatch(f"example dim {patches.shape[1]} != model dim {model.dim}")
    s, _ = similarity_profile(patches, model.protos, model.sim_kind)
    logits = model.head.effective() @ s
    return softmax(logits), s


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


# ---------------------------------------------------------------------------
# explanations

@dataclass
class ExplanationItem:
    prototype_id: int
    similarity: float
    head_weight: float
    importance: float
    display_text: str | None

    def rendered(self) -> str:
        return format_importance(self.similarity, self.head_weight)


@dataclass
class ExplanationResult:
    predicted_class: int
    probs: np.ndarray
    items: list[ExplanationItem]


def format_importance(sim: float, weight: float) -> str:
    """Two-decimal rendering of an importance product, e.g. ``0.52·8.07 = 4.20``."""
    return f"{sim:.2f}·{weight:.2f} = {sim * weight:.2f}"


def explain(
    example: EmbeddedExample,
    model: ProtoModel,
    top_k: int = 4,
    patches: np.ndarray | None = None,
) -> ExplanationResult:
    """Prediction plus the top prototypes of the predicted class, ranked by
    importance = similarity x head weight."""
    if patches is None:
        patches = example_patch_matrix(example, model.mode, model.selector)
    probs, s = forward(example, model, patches)
    t = int(np.argmax(probs))
    own = np.flatnonzero(model.protos.class_of == t)
    weights = model.head.weights[t]
    importance = s[own] * weights[own]
    order = own[np.argsort(-importance, kind="stable")][:top_k]
    items = [
        ExplanationItem(
            prototype_id=int(j),
            similarity=float(s[j]),
            head_weight=float(weights[j]),
            importance=float(s[j] * weights[j]),
            display_text=model.protos.display[j].text if model.protos.display[j] else None,
        )
        for j in order
    ]
    return ExplanationResult(predicted_class=t, probs=probs, items=items)


# ---------------------------------------------------------------------------
# nearest-neighbor decoding

@dataclass
class ProjectionEntry:
    prototype_id: int
    source_id: str
    pre_similarity: float
    post_similarity: float

    def as_dict(self) -> dict:
        return {
            "prototype_id": self.prototype_id,
            "source_id": self.source_id,
            "pre_similarity": self.pre_similarity,
            "post_similarity": self.post_similarity,
        }


def project(model: ProtoModel, train: Dataset) -> list[ProjectionEntry]:
    """Replace each unfrozen prototype with its most similar same-class
    training embedding, in place, so its displayed text is exact.

    Sentence mode only; word-level models keep latent prototypes and use
    :func:`nn_display` for decoding.
    """
    if model.mode != SENTENCE:
        raise ConfigInvalid("projection applies to sentence-level models only")
    protos = model.protos
    train_examples = train.subset(train.split.train)
    if not train_examples:
        raise EmptyDataset("projection needs a nonempty training split")
    embeddings = np.stack([ex.sentence_vec for ex in train_examples]).astype(np.float64)
    labels = np.array([ex.label for ex in train_examples])

    report = []
    for j in range(protos.m):
        if protos.frozen[j]:
            continue
        candidates = np.flatnonzero(labels == protos.class_of[j])
        if candidates.size == 0:
            raise EmptyClass(f"no training examples with class {int(protos.class_of[j])}")
        sims = pairwise_similarity(
            embeddings[candidates], protos.vecs[j][None, :], model.sim_kind
        )[:, 0]
        best_idx = int(np.argmax(sims))
        best = candidates[best_idx]
        ex = train_examples[best]
        pre = float(sims[best_idx])
        protos.vecs[j] = embeddings[best]
        post = float(
            pairwise_similarity(
                embeddings[best][None, :], protos.vecs[j][None, :], model.sim_kind
            )[0, 0]
        )
        protos.display[j] = DisplayRef(source_id=ex.id, text=ex.text)
        report.append(ProjectionEntry(j, ex.id, pre, post))
    return report


def nn_display(model: ProtoModel, train: Dataset) -> list[DisplayRef]:
    """Decode word-level prototypes by their nearest training patch without
    touching the latent vectors."""
    train_examples = train.subset(train.split.train)
    if not train_examples:
        raise EmptyDataset("nearest-neighbor display needs a nonempty training split")
    best_sim = np.full(model.m, -np.inf)
    best_ref: list[DisplayRef | None] = [None] * model.m
    for ex in train_examples:
        patches = generate_patches(ex.token_vecs, model.selector)
        sims = pairwise_similarity(patch_matrix(patches), model.protos.vecs, model.sim_kind)
        for j in range(model.m):
            idx = int(np.argmax(sims[:, j]))
            if sims[idx, j] > best_sim[j]:
                best_sim[j] = sims[idx, j]
                best_ref[j] = DisplayRef(
                    source_id=ex.id,
                    text=ex.text,
                    highlight=list(patches[idx].token_indices),
                )
    refs = [ref for ref in best_ref if ref is not None]
    model.protos.display = list(best_ref)
    return refs


# ---------------------------------------------------------------------------
# checkpoint container

def to_bytes(model: ProtoModel) -> bytes:
    """Serialize to the self-describing checkpoint container (bit-exact
    round trip; vectors stored as little-endian float32)."""
    header = {
        "format_version": CHECKPOINT_VERSION,
        "mode": model.mode,
        "dim": model.dim,
        "m": model.m,
        "classes": model.classes,
        "sim_kind": model.sim_kind,
        "selector": model.selector.as_dict(),
        "seed": model.seed,
        "epoch": model.epoch,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    display_bytes = json.dumps(
        [d.as_dict() if d is not None else None for d in model.protos.display],
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    ).encode("utf-8")

    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<HHI", CHECKPOINT_VERSION, 0, len(header_bytes)),
        header_bytes,
        np.ascontiguousarray(model.protos.vecs, dtype="<f4").tobytes(),
        np.ascontiguousarray(model.head.weights, dtype="<f4").tobytes(),
        np.ascontiguousarray(model.head.class_mask, dtype="<u1").tobytes(),
        np.ascontiguousarray(model.protos.class_of, dtype="<i4").tobytes(),
        np.ascontiguousarray(model.protos.frozen, dtype="<u1").tobytes(),
        struct.pack("<I", len(display_bytes)),
        display_bytes,
    ]
    return b"".join(parts)


def from_bytes(blob: bytes) -> ProtoModel:
    """Inverse of :func:`to_bytes`."""
    if blob[:4] != CHECKPOINT_MAGIC:
        raise MagicMismatch(f"checkpoint: bad magic {blob[:4]!r}")
    version, _reserved, header_len = struct.unpack("<HHI", blob[4:12])
    if version != CHECKPOINT_VERSION:
        raise MagicMismatch(f"checkpoint: unsupported version {version}")
    pos = 12
    header = json.loads(blob[pos : pos + header_len].decode("utf-8"))
    pos += header_len
    m, d, c = header["m"], header["dim"], header["classes"]

    def take(count: int, dtype: str) -> np.ndarray:
        nonlocal pos
        width = np.dtype(dtype).itemsize * count
        arr = np.frombuffer(blob[pos : pos + width], dtype=dtype)
        if arr.size != count:
            raise MagicMismatch("checkpoint: truncated blob")
        pos += width
        return arr

    vecs = take(m * d, "<f4").reshape(m, d).astype(np.float64)
    weights = take(c * m, "<f4").reshape(c, m).astype(np.float64)
    mask = take(c * m, "<u1").reshape(c, m).astype(np.float64)
    class_of = take(m, "<i4").astype(np.int32)
    frozen = take(m, "<u1").astype(bool)
    (display_len,) = struct.unpack("<I", blob[pos : pos + 4])
    pos += 4
    display = [
        DisplayRef.from_dict(d)
        for d in json.loads(blob[pos : pos + display_len].decode("utf-8"))
    ]

    return ProtoModel(
        mode=header["mode"],
        sim_kind=header["sim_kind"],
        selector=SelectorConfig.from_dict(header["selector"]),
        protos=PrototypeSet(vecs=vecs, class_of=class_of, frozen=frozen, display=display),
        head=ClassifierHead(weights=weights, class_mask=mask),
        seed=header["seed"],
        epoch=header["epoch"],
    )


def save_checkpoint(model: ProtoModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(model))


def load_checkpoint(path) -> ProtoModel:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def digest(model: ProtoModel) -> str:
    """Stable fingerprint of the full model state."""
    return hashlib.sha256(to_bytes(model)).hexdigest()
