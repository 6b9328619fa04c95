"""Corpus-to-dataset export.

Reads a labeled text corpus (jsonl or csv), embeds every sequence with the
chosen backend, drops sequences longer than the token cap, and writes the
dataset files the classifier engine consumes:

``dataset.jsonl``
    one ``{"id", "label", "text", "tokens"}`` object per line, UTF-8, LF.
``embeddings.bin``
    magic ``PTEB`` | u16 version=1 | u16 flags (bit0 = word-level) |
    u32 dim | u64 row_count | float32 little-endian rows.
``offsets.idx`` (word mode)
    magic ``PTIX`` | u64 example_count | per example u64 start_row,
    u32 token_count, u32 reserved=0.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backends import EmbeddingBackend

SENTENCE = "sentence"
WORD = "word"


@dataclass
class ExportJob:
    backend: EmbeddingBackend
    input_path: Path
    out_dir: Path
    mode: str = SENTENCE
    max_tokens: int = 40
    text_field: str = "text"
    label_field: str = "label"
    id_field: str = "id"


@dataclass
class ExportResult:
    examples: int
    dropped_long: int
    rows: int
    dim: int
    files: list[str] = field(default_factory=list)


def read_corpus(job: ExportJob):
    """Yield (id, text, label) records from a jsonl or csv corpus."""
    path = Path(job.input_path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.suffix == ".csv":
        with open(path, newline="", encoding="utf-8") as fh:
            for i, row in enumerate(csv.DictReader(fh)):
                yield (
                    row.get(job.id_field) or f"ex{i}",
                    row[job.text_field],
                    int(row[job.label_field]),
                )
    else:
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                yield (
                    rec.get(job.id_field) or f"ex{i}",
                    rec[job.text_field],
                    int(rec[job.label_field]),
                )


def export(job: ExportJob) -> ExportResult:
    """Run the export; returns counts for logging/tests."""
    if job.mode not in (SENTENCE, WORD):
        raise ValueError(f"mode must be {SENTENCE}|{WORD}")
    records = []
    dropped = 0
    for ex_id, text, label in read_corpus(job):
        tokens = job.backend.tokenize(text)
        if not tokens:
            dropped += 1
            continue
        if len(tokens) > job.max_tokens:
            dropped += 1
            continue
        records.append((ex_id, text, label, tokens))
    if not records:
        raise ValueError("corpus is empty after filtering")

    out = Path(job.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    word = job.mode == WORD

    rows = []
    offsets = []
    start = 0
    with open(out / "dataset.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for ex_id, text, label, tokens in records:
            sentence_vec, token_vecs = job.backend.encode(tokens)
            if word:
                rows.append(np.asarray(token_vecs, dtype=np.float32))
                offsets.append((start, len(tokens)))
                start += len(tokens)
            else:
                rows.append(np.asarray(sentence_vec, dtype=np.float32)[None, :])
            fh.write(
                json.dumps(
                    {"id": ex_id, "label": label, "text": text, "tokens": tokens},
                    ensure_ascii=False,
                )
                + "\n"
            )

    matrix = np.concatenate(rows, axis=0)
    flags = 1 if word else 0
    with open(out / "embeddings.bin", "wb") as fh:
        fh.write(b"PTEB")
        fh.write(struct.pack("<HHIQ", 1, flags, job.backend.dim, matrix.shape[0]))
        fh.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())

    files = ["dataset.jsonl", "embeddings.bin"]
    if word:
        with open(out / "offsets.idx", "wb") as fh:
            fh.write(b"PTIX")
            fh.write(struct.pack("<Q", len(records)))
            for start_row, count in offsets:
                fh.write(struct.pack("<QII", start_row, count, 0))
        files.append("offsets.idx")

    return ExportResult(
        examples=len(records),
        dropped_long=dropped,
        rows=matrix.shape[0],
        dim=job.backend.dim,
        files=files,
    )
