"""Datasets of embedded examples, their on-disk formats, and embedding providers.

On-disk layout (all integers and floats little-endian):

``dataset.jsonl``
    One JSON object per line: ``id`` (str), ``label`` (int), ``text`` (str),
    ``tokens`` (list of str). UTF-8, LF line endings.

``embeddings.bin``
    magic ``PTEB`` | u16 version=1 | u16 flags (bit0 = word-level) |
    u32 dim | u64 row_count | row_count*dim float32, row-major.

``offsets.idx`` (word-level only)
    magic ``PTIX`` | u64 example_count | per example:
    u64 start_row | u32 token_count | u32 reserved=0.

Sentence-level: row i of embeddings.bin is example i's sentence vector.
Word-level: rows [start_row, start_row+token_count) are example i's token
vectors, in token order. Only real tokens are stored (no padding rows).
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AllTokensRemoved,
    CountMismatch,
    DimMismatch,
    EmptyDataset,
    EmptyInput,
    MagicMismatch,
    MaskLengthMismatch,
    NonFiniteVector,
    ProviderCapability,
    TokenCountMismatch,
    UnknownExample,
)

EMBEDDINGS_MAGIC = b"PTEB"
OFFSETS_MAGIC = b"PTIX"
FORMAT_VERSION = 1
WORD_LEVEL_FLAG = 0x0001

SENTENCE = "sentence"
WORD = "word"

DEFAULT_MAX_TOKENS = 40


@dataclass
class EmbeddedExample:
    """One embedded instance. Exactly one of sentence_vec / token_vecs is set,
    according to the dataset mode."""

    id: str
    label: int
    text: str
    tokens: list[str]
    sentence_vec: np.ndarray | None = None
    token_vecs: np.ndarray | None = None

    @property
    def num_tokens(self) -> int:
        return len(self.tokens)


@dataclass
class Split:
    """Disjoint train/val/test index partition covering a dataset."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    @staticmethod
    def all_train(n: int) -> "Split":
        return Split(np.arange(n), np.arange(0), np.arange(0))

    @staticmethod
    def random(n: int, val_frac: float, test_frac: float, seed: int) -> "Split":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5_711_7]))
        perm = rng.permutation(n)
        n_val = int(round(n * val_frac))
        n_test = int(round(n * test_frac))
        return Split(
            train=np.sort(perm[n_val + n_test :]),
            val=np.sort(perm[:n_val]),
            test=np.sort(perm[n_val : n_val + n_test]),
        )

    def as_dict(self) -> dict[str, list[int]]:
        return {
            "train": self.train.tolist(),
            "val": self.val.tolist(),
            "test": self.test.tolist(),
        }


@dataclass
class Dataset:
    """An immutable collection of embedded examples plus a split partition."""

    mode: str
    dim: int
    classes: int
    examples: list[EmbeddedExample]
    split: Split
    max_tokens: int = DEFAULT_MAX_TOKENS
    _by_id: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._by_id:
            self._by_id = {ex.id: i for i, ex in enumerate(self.examples)}

    def __len__(self) -> int:
        return len(self.examples)

    def by_id(self, example_id: str) -> EmbeddedExample:
        idx = self._by_id.get(example_id)
        if idx is None:
            raise UnknownExample(f"no example with id {example_id!r}")
        return self.examples[idx]

    def subset(self, indices: np.ndarray) -> list[EmbeddedExample]:
        return [self.examples[i] for i in indices]

    def with_split(self, split: Split) -> "Dataset":
        return Dataset(self.mode, self.dim, self.classes, self.examples, split,
                       self.max_tokens)


def mean_pool(vecs: np.ndarray) -> np.ndarray:
    """Mean of the rows of ``vecs`` in float64, accumulated row by row
    (fixed order, so repeated calls are bit-identical)."""
    acc = np.add.reduce(vecs.astype(np.float64, copy=False), axis=0)
    return acc / vecs.shape[0]


# ---------------------------------------------------------------------------
# embedding providers

class EmbeddingProvider:
    """Maps token sequences to vectors. ``novel_text`` providers can embed
    arbitrary token lists; ``stored_only`` providers cannot."""

    dim: int
    stored_only: bool = False
    novel_text: bool = False
    deterministic: bool = True

    def encode(self, tokens: list[str]) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(sentence_vec, token_vecs)`` for a token list."""
        raise NotImplementedError


def _hash_unit_vector(token: str, dim: int, seed: int) -> np.ndarray:
    """Deterministic unit vector for an out-of-table token, derived from a
    seeded hash so fixtures reproduce across platforms and processes."""
    digest = hashlib.sha256(f"{seed}:{token}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    v = rng.standard_normal(dim)
    return (v / np.linalg.norm(v)).astype(np.float32)


def toy_encode(
    tokens: list[str],
    table: dict[str, np.ndarray],
    dim: int,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic bag-of-token-vectors encoder.

    Each token maps to ``table[token]`` when present, otherwise to a
    hash-seeded unit vector. The sentence vector is the arithmetic mean of
    the token vectors in token order.
    """
    if not tokens:
        raise EmptyInput("toy_encode requires at least one token")
    rows = []
    for tok in tokens:
        vec = table.get(tok)
        if vec is None:
            vec = _hash_unit_vector(tok, dim, seed)
        vec = np.asarray(vec, dtype=np.float32)
        if vec.shape != (dim,):
            raise DimMismatch(f"table vector for {tok!r} has shape {vec.shape}, want ({dim},)")
        rows.append(vec)
    token_vecs = np.stack(rows)
    sentence_vec = mean_pool(token_vecs).astype(np.float32)
    return sentence_vec, token_vecs


class ToyEncoder(EmbeddingProvider):
    """Table-backed toy encoder; a stand-in for a frozen language model that
    keeps end-to-end runs fully deterministic and dependency-free."""

    stored_only = False
    novel_text = True
    deterministic = True

    def __init__(self, dim: int, table: dict[str, np.ndarray] | None = None, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self.table = {k: np.asarray(v, dtype=np.float32) for k, v in (table or {}).items()}

    def encode(self, tokens: list[str]) -> tuple[np.ndarray, np.ndarray]:
        return toy_encode(tokens, self.table, self.dim, self.seed)


class StoredProvider(EmbeddingProvider):
    """Serves only the embeddings already present in a dataset; any novel
    token sequence is a capability error."""

    stored_only = True
    novel_text = False
    deterministic = True

    def __init__(self, dataset: Dataset):
        self.dim = dataset.dim
        self._by_tokens: dict[tuple[str, ...], EmbeddedExample] = {
            tuple(ex.tokens): ex for ex in dataset.examples
        }

    def encode(self, tokens: list[str]) -> tuple[np.ndarray, np.ndarray]:
        ex = self._by_tokens.get(tuple(tokens))
        if ex is None:
            raise ProviderCapability(
                "stored-only provider cannot embed novel text; "
                "configure a toy or HTTP embedding provider"
            )
        if ex.token_vecs is not None:
            return mean_pool(ex.token_vecs).astype(np.float32), ex.token_vecs
        return ex.sentence_vec, np.tile(ex.sentence_vec, (len(tokens), 1))


class HttpProvider(EmbeddingProvider):
    """Client for an external embedding service (POST /embed {"tokens": [...]}).

    Bridges the engine to real language models running in a sidecar process.
    """

    stored_only = False
    novel_text = True
    deterministic = True

    def __init__(self, base_url: str, dim: int, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.dim = dim
        self.timeout = timeout

    def encode(self, tokens: list[str]) -> tuple[np.ndarray, np.ndarray]:
        import httpx

        if not tokens:
            raise EmptyInput("cannot embed an empty token list")
        resp = httpx.post(
            f"{self.base_url}/embed", json={"tokens": tokens}, timeout=self.timeout
        )
        if resp.status_code != 200:
            raise ProviderCapability(f"embedding service returned {resp.status_code}: {resp.text}")
        body = resp.json()
        sentence_vec = np.asarray(body["sentence_vec"], dtype=np.float32)
        token_vecs = np.asarray(body["token_vecs"], dtype=np.float32)
        if sentence_vec.shape != (self.dim,):
            raise DimMismatch(
                f"embedding service dim {sentence_vec.shape[-1]} != session dim {self.dim}"
            )
        return sentence_vec, token_vecs


# ---------------------------------------------------------------------------
# perturbation (rationale removal / retention)

RATIONALE_ONLY = "rationale_only"
RATIONALE_REMOVED = "rationale_removed"


def perturb(
    example: EmbeddedExample,
    rationale_mask: list[bool] | np.ndarray,
    keep: str,
    provider: EmbeddingProvider,
) -> EmbeddedExample:
    """Re-embed an example with its rationale tokens kept or removed.

    The original example is never mutated; the retained token subsequence is
    embedded from scratch by ``provider``.
    """
    mask = np.asarray(rationale_mask, dtype=bool)
    if mask.shape != (len(example.tokens),):
        raise MaskLengthMismatch(
            f"mask length {mask.size} != token count {len(example.tokens)} "
            f"for example {example.id!r}"
        )
    if keep == RATIONALE_ONLY:
        retained = [t for t, m in zip(example.tokens, mask) if m]
    elif keep == RATIONALE_REMOVED:
        retained = [t for t, m in zip(example.tokens, mask) if not m]
    else:
        raise ValueError(f"keep must be {RATIONALE_ONLY!r} or {RATIONALE_REMOVED!r}")
    if not retained:
        raise AllTokensRemoved(f"perturbation leaves no tokens for example {example.id!r}")
    if not provider.novel_text:
        raise ProviderCapability("perturbation requires a provider that embeds novel text")
    sentence_vec, token_vecs = provider.encode(retained)
    return EmbeddedExample(
        id=example.id,
        label=example.label,
        text=" ".join(retained),
        tokens=retained,
        sentence_vec=sentence_vec,
        token_vecs=token_vecs if example.token_vecs is not None else None,
    )


# ---------------------------------------------------------------------------
# file IO

def write_dataset(dataset: Dataset, out_dir: str | Path) -> None:
    """Write ``dataset.jsonl`` + ``embeddings.bin`` (+ ``offsets.idx``)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    word = dataset.mode == WORD

    with open(out / "dataset.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for ex in dataset.examples:
            fh.write(
                json.dumps(
                    {"id": ex.id, "label": ex.label, "text": ex.text, "tokens": ex.tokens},
                    ensure_ascii=False,
                )
                + "\n"
            )

    if word:
        rows = np.concatenate([ex.token_vecs for ex in dataset.examples], axis=0)
    else:
        rows = np.stack([ex.sentence_vec for ex in dataset.examples])
    rows = np.ascontiguousarray(rows, dtype=np.float32)

    flags = WORD_LEVEL_FLAG if word else 0
    with open(out / "embeddings.bin", "wb") as fh:
        fh.write(EMBEDDINGS_MAGIC)
        fh.write(struct.pack("<HHIQ", FORMAT_VERSION, flags, dataset.dim, rows.shape[0]))
        fh.write(rows.tobytes())

    if word:
        with open(out / "offsets.idx", "wb") as fh:
            fh.write(OFFSETS_MAGIC)
            fh.write(struct.pack("<Q", len(dataset.examples)))
            start = 0
            for ex in dataset.examples:
                fh.write(struct.pack("<QII", start, ex.num_tokens, 0))
                start += ex.num_tokens


def _read_exact(fh, n: int, path: Path, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CountMismatch(f"{path.name}: truncated while reading {what}")
    return buf


def load_dataset(
    jsonl_path: str | Path,
    embeddings_path: str | Path,
    offsets_path: str | Path | None = None,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    expected_dim: int | None = None,
) -> Dataset:
    """Load and validate a dataset directory's files.

    Mode is word-level iff an offsets file is given; every cross-file count
    must agree and every vector must be finite.
    """
    jsonl_path = Path(jsonl_path)
    embeddings_path = Path(embeddings_path)

    records = []
    with open(jsonl_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            for key in ("id", "label", "text", "tokens"):
                if key not in rec:
                    raise CountMismatch(f"{jsonl_path.name}:{line_no} missing field {key!r}")
            records.append(rec)

    with open(embeddings_path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMBEDDINGS_MAGIC:
            raise MagicMismatch(f"{embeddings_path.name}: bad magic {magic!r}")
        version, flags, dim, row_count = struct.unpack(
            "<HHIQ", _read_exact(fh, 16, embeddings_path, "header")
        )
        if version != FORMAT_VERSION:
            raise MagicMismatch(f"{embeddings_path.name}: unsupported version {version}")
        payload = _read_exact(fh, row_count * dim * 4, embeddings_path, "embedding rows")
        if fh.read(1):
            raise CountMismatch(f"{embeddings_path.name}: trailing bytes after {row_count} rows")
    rows = np.frombuffer(payload, dtype="<f4").reshape(row_count, dim)

    if expected_dim is not None and dim != expected_dim:
        raise DimMismatch(f"{embeddings_path.name}: dim {dim} != expected {expected_dim}")
    if not np.isfinite(rows).all():
        raise NonFiniteVector(f"{embeddings_path.name}: non-finite embedding values")

    word = offsets_path is not None
    if bool(flags & WORD_LEVEL_FLAG) != word:
        raise MagicMismatch(
            f"{embeddings_path.name}: word-level flag is {bool(flags & WORD_LEVEL_FLAG)} "
            f"but offsets file {'present' if word else 'absent'}"
        )

    examples: list[EmbeddedExample] = []
    if word:
        offsets_path = Path(offsets_path)
        with open(offsets_path, "rb") as fh:
            magic = fh.read(4)
            if magic != OFFSETS_MAGIC:
                raise MagicMismatch(f"{offsets_path.name}: bad magic {magic!r}")
            (example_count,) = struct.unpack("<Q", _read_exact(fh, 8, offsets_path, "header"))
            if example_count != len(records):
                raise CountMismatch(
                    f"{offsets_path.name}: {example_count} entries but "
                    f"{jsonl_path.name} has {len(records)} records"
                )
            entries = []
            for _ in range(example_count):
                start, count, _reserved = struct.unpack(
                    "<QII", _read_exact(fh, 16, offsets_path, "entry")
                )
                entries.append((start, count))
        total = sum(c for _, c in entries)
        if total != row_count:
            raise CountMismatch(
                f"{embeddings_path.name}: row_count {row_count} != "
                f"sum of token counts {total} in {offsets_path.name}"
            )
        for rec, (start, count) in zip(records, entries):
            if count != len(rec["tokens"]):
                raise TokenCountMismatch(
                    f"example {rec['id']!r}: {len(rec['tokens'])} tokens in "
                    f"{jsonl_path.name} but offsets say {count}"
                )
            examples.append(
                EmbeddedExample(
                    id=rec["id"],
                    label=int(rec["label"]),
                    text=rec["text"],
                    tokens=list(rec["tokens"]),
                    token_vecs=rows[start : start + count].copy(),
                )
            )
    else:
        if row_count != len(records):
            raise CountMismatch(
                f"{embeddings_path.name}: row_count {row_count} != "
                f"{len(records)} records in {jsonl_path.name}"
            )
        for i, rec in enumerate(records):
            examples.append(
                EmbeddedExample(
                    id=rec["id"],
                    label=int(rec["label"]),
                    text=rec["text"],
                    tokens=list(rec["tokens"]),
                    sentence_vec=rows[i].copy(),
                )
            )

    examples = [ex for ex in examples if ex.num_tokens <= max_tokens]
    if not examples:
        raise EmptyDataset(f"no examples remain after max_tokens={max_tokens} filter")
    classes = max(ex.label for ex in examples) + 1
    return Dataset(
        mode=WORD if word else SENTENCE,
        dim=dim,
        classes=classes,
        examples=examples,
        split=Split.all_train(len(examples)),
        max_tokens=max_tokens,
    )


def load_dataset_dir(data_dir: str | Path, max_tokens: int = DEFAULT_MAX_TOKENS) -> Dataset:
    """Load a dataset directory, inferring word mode from offsets.idx presence."""
    data = Path(data_dir)
    offsets = data / "offsets.idx"
    return load_dataset(
        data / "dataset.jsonl",
        data / "embeddings.bin",
        offsets if offsets.exists() else None,
        max_tokens=max_tokens,
    )
