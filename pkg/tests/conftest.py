"""Shared synthetic data builders for the test suite."""

import numpy as np
import pytest

from manipdet.core import LABELS, NUM_LABELS, CharSpan, Sample
from manipdet.ingest import EmbeddingMatrix, TokenEmbeddingSequence

WORDS = ["мир", "війна", "правда", "слава", "сила", "народ", "держава", "ворог"]


def make_text(rng, n_words=8):
    return " ".join(rng.choice(WORDS) for _ in range(n_words))


def make_sample(rng, sample_id, n_words=8, techniques=None, with_spans=True):
    content = make_text(rng, n_words)
    spans = ()
    if with_spans and len(content) >= 6:
        start = int(rng.integers(0, len(content) - 4))
        end = int(rng.integers(start + 1, len(content)))
        spans = (CharSpan(start, end),)
    if techniques is None:
        techniques = frozenset(
            LABELS[i] for i in range(NUM_LABELS) if rng.random() < 0.25
        )
    return Sample(id=sample_id, content=content, techniques=frozenset(techniques),
                  trigger_spans=spans)


def make_dataset(n, seed=0, with_spans=True):
    rng = np.random.default_rng(seed)
    return [make_sample(rng, f"s{i:04d}", with_spans=with_spans) for i in range(n)]


def make_embeddings(ids, dim=16, seed=0):
    rng = np.random.default_rng(seed)
    return EmbeddingMatrix(ids=list(ids), rows=rng.normal(size=(len(ids), dim)))


def make_token_sequence(rng, sample_id, n_tokens=6, dim=8, token_width=4):
    """Row 0 is the special start token; content tokens tile the text."""
    tokens = rng.normal(size=(n_tokens + 1, dim))
    offsets = [(0, 0)]
    pos = 0
    for _ in range(n_tokens):
        offsets.append((pos, pos + token_width))
        pos += token_width
    return TokenEmbeddingSequence(id=sample_id, tokens=tokens, offsets=offsets)


def imbalanced_probs_labels(n, seed=0, rare_class=0, rare_prevalence=0.02):
    """Probabilities whose rare-class optimum sits near 0.2, not 0.5.

    Rare-class positives score in [0.22, 0.45] (invisible to a 0.5
    cutoff); every other class is cleanly separated around 0.5.
    """
    rng = np.random.default_rng(seed)
    labels = np.zeros((n, NUM_LABELS), dtype=np.int8)
    probs = np.zeros((n, NUM_LABELS))
    for c in range(NUM_LABELS):
        prevalence = rare_prevalence if c == rare_class else 0.4
        y = (rng.random(n) < prevalence).astype(np.int8)
        if y.sum() == 0:
            y[rng.integers(n)] = 1  # keep at least one positive per class
        labels[:, c] = y
        if c == rare_class:
            probs[:, c] = np.where(y == 1, rng.uniform(0.22, 0.45, n), rng.uniform(0.0, 0.15, n))
        else:
            probs[:, c] = np.where(y == 1, rng.uniform(0.55, 0.95, n), rng.uniform(0.05, 0.45, n))
    return probs, labels


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
