"""Export jobs: dataset JSONL in, EMB1/TEM1 artifacts out.

Everything written here round-trips through the pipeline's own readers,
so a file that this module produces is by construction a file the
pipeline accepts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from manipdet import ingest
from manipdet.ingest import EmbeddingMatrix, TokenEmbeddingSequence

from .encoders import resolve_encoder
from .offsets import byte_offsets_to_code_points


@dataclass(frozen=True)
class ExportJob:
    dataset: str
    out: str
    encoder: str = "hash:32"
    batch_size: int = 32
    device: str | None = None
    triggers: bool = False
    unit_norm: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")


def _load_samples(job: ExportJob):
    samples, report = ingest.read_dataset(job.dataset)
    if report:
        raise ValueError(f"{job.dataset}: {report[0]}")
    if not samples:
        raise ValueError(f"{job.dataset}: empty dataset, nothing to export")
    return samples


def trigger_text(sample) -> str:
    """Concatenation of the sample's trigger spans in document order."""
    return " ".join(
        sample.content[span.start:span.end] for span in sample.trigger_spans
    )


def export_sentence_embeddings(job: ExportJob, encoder=None) -> EmbeddingMatrix:
    """One embedding row per sample: the full text, or in trigger mode the
    concatenated trigger spans.  A sample without trigger spans falls back
    to its full-text embedding so every row stays meaningful."""
    encoder = encoder if encoder is not None else resolve_encoder(job.encoder, job.device)
    samples = _load_samples(job)
    texts = [s.content for s in samples]
    if job.triggers:
        texts = [trigger_text(s) or s.content for s in samples]

    rows = []
    for start in range(0, len(texts), job.batch_size):
        rows.append(encoder.encode_sentences(texts[start:start + job.batch_size]))
    matrix = np.vstack(rows).astype(np.float64)
    if job.unit_norm:
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        matrix = np.divide(matrix, norms, out=np.zeros_like(matrix), where=norms > 0)

    result = EmbeddingMatrix(ids=[s.id for s in samples], rows=matrix)
    ingest.write_embedding_matrix(result, job.out)
    return result


def export_token_embeddings(job: ExportJob, encoder=None) -> list[TokenEmbeddingSequence]:
    """Per-sample token matrices with code-point offsets, row 0 being the
    sequence-start token.  Byte-unit tokenizer offsets are converted here;
    the written TEM1 file always indexes code points."""
    encoder = encoder if encoder is not None else resolve_encoder(job.encoder, job.device)
    samples = _load_samples(job)
    seqs = []
    for sample in samples:
        tokens, offsets = encoder.encode_tokens(sample.content)
        if encoder.offset_unit == "bytes":
            offsets = byte_offsets_to_code_points(sample.content, offsets)
        elif encoder.offset_unit != "code_points":
            raise ValueError(f"unknown offset unit {encoder.offset_unit!r}")
        seqs.append(TokenEmbeddingSequence(id=sample.id, tokens=tokens, offsets=offsets))
    ingest.write_token_embeddings(seqs, job.out)
    return seqs
