"""Readers and writers for every on-disk artifact.

Formats:
  * dataset — JSON Lines, fields: id, content, lang (optional),
    techniques (canonical strings), trigger_words ([start, end] code-point
    pairs).
  * EMB1 — sentence-embedding matrix: magic "EMB1", u32 row count, u32 dim,
    row-major little-endian f32.  Sample ids live in a sidecar JSON array
    at <path>.ids.json.
  * TEM1 — token-embedding sequences: magic "TEM1", u32 sample count; per
    sample u16 id length + UTF-8 id, u32 token count T, u32 dim, T*dim
    little-endian f32, then T little-endian u32 (start, end) offset pairs.
  * prob table — CSV with header "id,<ten canonical labels>".

Readers never silently repair data: every violation is an error or a
validation-report entry.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .core import (
    LABELS,
    NUM_LABELS,
    CharSpan,
    Sample,
    UnknownTechniqueError,
    parse_label,
    validate_dataset,
)


class FormatError(ValueError):
    """Raised when an on-disk artifact violates its format contract."""


@dataclass
class EmbeddingMatrix:
    """n x dim matrix of real embeddings, row i belonging to ids[i]."""

    ids: list[str]
    rows: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise FormatError(f"embedding matrix must be 2-D, got shape {self.rows.shape}")
        if len(self.ids) != self.rows.shape[0]:
            raise FormatError(
                f"id count {len(self.ids)} does not match row count {self.rows.shape[0]}"
            )
        if len(set(self.ids)) != len(self.ids):
            raise FormatError("embedding ids must be unique")
        if not np.all(np.isfinite(self.rows)):
            raise FormatError("embedding matrix contains NaN or Inf")

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def row_for(self, sample_id: str) -> np.ndarray:
        return self.rows[self.ids.index(sample_id)]


@dataclass
class TokenEmbeddingSequence:
    """Per-sample token embeddings plus (start, end) code-point offsets.

    Row 0 is the sequence-start special token; special tokens carry the
    (0, 0) offset sentinel.
    """

    id: str
    tokens: np.ndarray
    offsets: list[tuple[int, int]]

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.float64)
        if self.tokens.ndim != 2:
            raise FormatError(f"sample {self.id!r}: token matrix must be 2-D")
        if len(self.offsets) != self.tokens.shape[0]:
            raise FormatError(
                f"sample {self.id!r}: {len(self.offsets)} offsets for "
                f"{self.tokens.shape[0]} tokens"
            )
        if self.offsets and self.offsets[0] != (0, 0):
            raise FormatError(f"sample {self.id!r}: row 0 must be the special token (0, 0)")
        prev_start = -1
        for start, end in self.offsets:
            if (start, end) == (0, 0):
                continue
            if start >= end:
                raise FormatError(
                    f"sample {self.id!r}: non-special offset ({start}, {end}) "
                    "violates start < end"
                )
            if start < prev_start:
                raise FormatError(f"sample {self.id!r}: offsets not non-decreasing in start")
            prev_start = start

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    def special_mask(self) -> np.ndarray:
        """Boolean mask, True where the token is special ((0, 0) offset)."""
        return np.array([off == (0, 0) for off in self.offsets], dtype=bool)


@dataclass
class ProbTable:
    """Per-sample probability vectors over the canonical label order."""

    ids: list[str]
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape != (len(self.ids), NUM_LABELS):
            raise FormatError(
                f"prob table shape {self.probs.shape} does not match "
                f"{len(self.ids)} ids x {NUM_LABELS} labels"
            )
        if len(set(self.ids)) != len(self.ids):
            raise FormatError("prob table ids must be unique")
        if not np.all((self.probs >= 0.0) & (self.probs <= 1.0)):
            raise FormatError("probability outside [0, 1]")


# ---------------------------------------------------------------- dataset

def sample_from_record(record: dict) -> Sample:
    spans = []
    for pair in record.get("trigger_words", []):
        if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
            raise FormatError(f"bad trigger_words entry: {pair!r}")
        spans.append(CharSpan(int(pair[0]), int(pair[1])))
    return Sample(
        id=str(record["id"]),
        content=record["content"],
        lang=record.get("lang"),
        techniques=frozenset(parse_label(t) for t in record.get("techniques", [])),
        trigger_spans=tuple(spans),
    )


def sample_to_record(sample: Sample) -> dict:
    record: dict = {"id": sample.id, "content": sample.content}
    if sample.lang is not None:
        record["lang"] = sample.lang
    record["techniques"] = sorted(sample.techniques, key=LABELS.index)
    record["trigger_words"] = [[s.start, s.end] for s in sample.trigger_spans]
    return record


def read_dataset(path) -> tuple[list[Sample], list[str]]:
    """Read a JSONL dataset.  Returns (samples, validation report)."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                samples.append(sample_from_record(record))
            except UnknownTechniqueError:
                raise
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise FormatError(f"{path}: malformed line {lineno}: {exc}") from exc
    return samples, validate_dataset(samples)


def read_predictions(path) -> list[Sample]:
    """Read a predictions JSONL file: like a dataset, but content is
    optional and spans are not range-checked against it."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                record.setdefault("content", "")
                samples.append(sample_from_record(record))
            except UnknownTechniqueError:
                raise
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise FormatError(f"{path}: malformed line {lineno}: {exc}") from exc
    return samples


def write_dataset(samples, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample_to_record(sample), ensure_ascii=False) + "\n")


def write_predictions(ids, spans_per_sample, path) -> None:
    """Write predicted spans in the dataset JSONL shape (id + trigger_words)."""
    with open(path, "w", encoding="utf-8") as fh:
        for sample_id, spans in zip(ids, spans_per_sample):
            record = {"id": sample_id, "trigger_words": [[s.start, s.end] for s in spans]}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def write_label_predictions(ids, label_sets, path) -> None:
    """Write predicted technique labels in the dataset JSONL shape."""
    with open(path, "w", encoding="utf-8") as fh:
        for sample_id, labels in zip(ids, label_sets):
            record = {"id": sample_id, "techniques": sorted(labels, key=LABELS.index)}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


# ------------------------------------------------------------------ EMB1

EMB1_MAGIC = b"EMB1"


def ids_sidecar_path(path) -> str:
    return str(path) + ".ids.json"


def write_embedding_matrix(matrix: EmbeddingMatrix, path) -> None:
    rows32 = np.ascontiguousarray(matrix.rows, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(EMB1_MAGIC)
        fh.write(struct.pack("<II", rows32.shape[0], rows32.shape[1]))
        fh.write(rows32.tobytes())
    with open(ids_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(matrix.ids, fh, ensure_ascii=False)


def read_embedding_matrix(path) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMB1_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {EMB1_MAGIC!r}")
        header = fh.read(8)
        if len(header) != 8:
            raise FormatError(f"{path}: truncated header")
        n, dim = struct.unpack("<II", header)
        payload = fh.read(n * dim * 4)
        if len(payload) != n * dim * 4:
            raise FormatError(f"{path}: truncated payload ({len(payload)} of {n * dim * 4} bytes)")
    rows = np.frombuffer(payload, dtype="<f4").reshape(n, dim)
    if not np.all(np.isfinite(rows)):
        raise FormatError(f"{path}: NaN or Inf entries")
    with open(ids_sidecar_path(path), encoding="utf-8") as fh:
        ids = json.load(fh)
    if len(ids) != n:
        raise FormatError(f"{path}: sidecar has {len(ids)} ids for {n} rows")
    return EmbeddingMatrix(ids=ids, rows=rows.astype(np.float64))


# ------------------------------------------------------------------ TEM1

TEM1_MAGIC = b"TEM1"


def write_token_embeddings(seqs, path) -> None:
    with open(path, "wb") as fh:
        fh.write(TEM1_MAGIC)
        fh.write(struct.pack("<I", len(seqs)))
        for seq in seqs:
            id_bytes = seq.id.encode("utf-8")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            tokens32 = np.ascontiguousarray(seq.tokens, dtype="<f4")
            fh.write(struct.pack("<II", tokens32.shape[0], tokens32.shape[1]))
            fh.write(tokens32.tobytes())
            for start, end in seq.offsets:
                fh.write(struct.pack("<II", start, end))


def read_token_embeddings(path) -> list[TokenEmbeddingSequence]:
    def take(fh, n, what):
        data = fh.read(n)
        if len(data) != n:
            raise FormatError(f"{path}: truncated while reading {what}")
        return data

    seqs = []
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != TEM1_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {TEM1_MAGIC!r}")
        (count,) = struct.unpack("<I", take(fh, 4, "sample count"))
        for _ in range(count):
            (id_len,) = struct.unpack("<H", take(fh, 2, "id length"))
            sample_id = take(fh, id_len, "id").decode("utf-8")
            t, dim = struct.unpack("<II", take(fh, 8, f"shape of {sample_id!r}"))
            tokens = np.frombuffer(
                take(fh, t * dim * 4, f"tokens of {sample_id!r}"), dtype="<f4"
            ).reshape(t, dim)
            offsets = []
            for _ in range(t):
                offsets.append(struct.unpack("<II", take(fh, 8, f"offsets of {sample_id!r}")))
            seqs.append(
                TokenEmbeddingSequence(
                    id=sample_id, tokens=tokens.astype(np.float64), offsets=offsets
                )
            )
    return seqs


# ------------------------------------------------------------- prob CSV

def write_prob_table(table: ProbTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *LABELS])
        for sample_id, row in zip(table.ids, table.probs):
            writer.writerow([sample_id] + [f"{p:.9g}" for p in row])


def read_prob_table(path) -> ProbTable:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["id", *LABELS]
        if header != expected:
            raise FormatError(
                f"{path}: header {header!r} does not match the canonical column order"
            )
        ids, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 1 + NUM_LABELS:
                raise FormatError(f"{path}: line {lineno}: expected {1 + NUM_LABELS} columns")
            values = [float(v) for v in row[1:]]
            for v in values:
                if math.isnan(v) or not 0.0 <= v <= 1.0:
                    raise FormatError(f"{path}: line {lineno}: probability {v} outside [0, 1]")
            ids.append(row[0])
            rows.append(values)
    return ProbTable(ids=ids, probs=np.array(rows, dtype=np.float64).reshape(len(ids), NUM_LABELS))


# ------------------------------------------------- token probability CSV

def write_token_probs(seq_probs, path) -> None:
    """Write per-token probabilities as CSV rows (id, token_index, prob)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "token_index", "prob"])
        for sample_id, probs in seq_probs:
            for i, p in enumerate(probs):
                writer.writerow([sample_id, i, f"{p:.9g}"])


def read_token_probs(path) -> list[tuple[str, np.ndarray]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "token_index", "prob"]:
            raise FormatError(f"{path}: bad token-prob header {header!r}")
        by_id: dict[str, list[float]] = {}
        order: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            sample_id, index, prob = row[0], int(row[1]), float(row[2])
            if sample_id not in by_id:
                by_id[sample_id] = []
                order.append(sample_id)
            if index != len(by_id[sample_id]):
                raise FormatError(f"{path}: line {lineno}: token indices out of order")
            by_id[sample_id].append(prob)
    return [(sample_id, np.array(by_id[sample_id])) for sample_id in order]
