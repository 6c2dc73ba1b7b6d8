"""Encoder backends behind one small interface.

An encoder provides:

- ``dim`` — embedding width
- ``offset_unit`` — "bytes" or "code_points", the unit of token offsets
- ``encode_sentences(texts)`` — (n, dim) float array, one row per text
- ``encode_tokens(text)`` — ((T, dim) array, T offset pairs), row 0 the
  sequence-start token with offsets (0, 0)

The default ``hash:<dim>`` backend needs no downloaded weights: it embeds
hashed character trigrams, which is deterministic, fast and good enough
to exercise every byte of the export formats.  Real encoders (any
sentence-transformers or Hugging Face model identifier) load lazily so
the package works offline.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

_TOKEN_RE = re.compile(r"\S+")


def _bucket(ngram: str, dim: int) -> tuple[int, float]:
    digest = hashlib.blake2b(ngram.encode("utf-8"), digest_size=8).digest()
    value = int.from_bytes(digest, "little")
    return value % dim, 1.0 if (value >> 63) & 1 else -1.0


def _hash_vector(text: str, dim: int) -> np.ndarray:
    vec = np.zeros(dim)
    padded = f"\x02{text}\x03"
    for i in range(len(padded) - 2):
        index, sign = _bucket(padded[i:i + 3], dim)
        vec[index] += sign
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


class HashEncoder:
    """Deterministic offline stand-in for a real sentence/token encoder.

    Token offsets are reported in UTF-8 bytes on purpose: that is what
    many fast tokenizers emit, and it forces the export layer's
    byte-to-code-point conversion to run in every test.
    """

    offset_unit = "bytes"

    def __init__(self, dim: int = 32):
        if dim < 1:
            raise ValueError(f"encoder dim must be positive, got {dim}")
        self.dim = dim

    def encode_sentences(self, texts) -> np.ndarray:
        return np.stack([_hash_vector(t, self.dim) for t in texts])

    def encode_tokens(self, text: str):
        rows = [_hash_vector(text, self.dim)]
        offsets = [(0, 0)]
        encoded_prefix = 0
        prev_end = 0
        for match in _TOKEN_RE.finditer(text):
            start_bytes = encoded_prefix + len(
                text[prev_end:match.start()].encode("utf-8"))
            token = match.group()
            end_bytes = start_bytes + len(token.encode("utf-8"))
            rows.append(_hash_vector(token, self.dim))
            offsets.append((start_bytes, end_bytes))
            encoded_prefix, prev_end = end_bytes, match.end()
        return np.stack(rows), offsets


class SentenceTransformerEncoder:
    """Sentence embeddings from a sentence-transformers checkpoint."""

    offset_unit = "code_points"

    def __init__(self, model_id: str, device: str | None = None):
        from sentence_transformers import SentenceTransformer

        self.model = SentenceTransformer(model_id, device=device)
        self.dim = self.model.get_sentence_embedding_dimension()

    def encode_sentences(self, texts) -> np.ndarray:
        return np.asarray(self.model.encode(
            list(texts), convert_to_numpy=True, normalize_embeddings=False))

    def encode_tokens(self, text: str):
        raise ValueError(
            "sentence-transformers backend exports sentence embeddings only; "
            "use a Hugging Face encoder for token export"
        )


class HFTokenEncoder:
    """Final-layer token embeddings from a Hugging Face encoder with a
    fast tokenizer (offset mappings are required)."""

    offset_unit = "code_points"

    def __init__(self, model_id: str, device: str | None = None):
        import torch
        from transformers import AutoModel, AutoTokenizer

        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        if not getattr(self.tokenizer, "is_fast", False):
            raise ValueError(f"tokenizer for {model_id!r} lacks offset support")
        self.model = AutoModel.from_pretrained(model_id).eval()
        self.device = device or "cpu"
        self.model.to(self.device)
        self.dim = self.model.config.hidden_size
        self._torch = torch

    def encode_sentences(self, texts) -> np.ndarray:
        rows = []
        for text in texts:
            tokens, _ = self.encode_tokens(text)
            rows.append(tokens[1:].mean(axis=0) if len(tokens) > 1 else tokens[0])
        return np.stack(rows)

    def encode_tokens(self, text: str):
        torch = self._torch
        batch = self.tokenizer(text, return_offsets_mapping=True,
                               return_tensors="pt", truncation=True)
        offset_mapping = batch.pop("offset_mapping")[0].tolist()
        special = self.tokenizer.get_special_tokens_mask(
            batch["input_ids"][0].tolist(), already_has_special_tokens=True)
        with torch.no_grad():
            hidden = self.model(
                **{k: v.to(self.device) for k, v in batch.items()}
            ).last_hidden_state[0].cpu().numpy()
        offsets = [
            (0, 0) if is_special else (int(a), int(b))
            for (a, b), is_special in zip(offset_mapping, special)
        ]
        return hidden, offsets


def resolve_encoder(identifier: str, device: str | None = None):
    """``hash:<dim>`` (or plain ``hash``), ``st:<model>`` for
    sentence-transformers, anything else is a Hugging Face model id."""
    if identifier == "hash":
        return HashEncoder()
    if identifier.startswith("hash:"):
        return HashEncoder(dim=int(identifier.split(":", 1)[1]))
    if identifier.startswith("st:"):
        return SentenceTransformerEncoder(identifier.split(":", 1)[1], device=device)
    return HFTokenEncoder(identifier, device=device)
