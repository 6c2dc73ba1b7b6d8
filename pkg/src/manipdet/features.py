"""Stacked feature construction: spherical k-means over trigger-phrase
embeddings, centroid cosine distances, nearest-neighbour technique
frequencies, meta-linguistic features and the fixed 48-dim layout.

Feature layout: [0..10) base probabilities, [10..20) centroid distances,
[20..30) text-neighbour frequencies, [30..40) trigger-neighbour
frequencies, [40..48) meta features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import NUM_LABELS
from .ingest import EmbeddingMatrix

FEATURE_DIM = 48
META_FEATURE_NAMES = (
    "char_count",
    "word_count",
    "question_count",
    "exclam_count",
    "url_flag",
    "uppercase_ratio",
    "digit_ratio",
    "newline_count",
)

_URL_MARKERS = ("http://", "https://", "t.me/")


def _unit_rows(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm embedding row")
    return rows / norms


@dataclass
class KMeansModel:
    """Spherical k-means result: unit-norm centroids in cluster order."""

    centroids: np.ndarray
    seed: int
    iterations: int
    inertia: float
    inertia_history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def fit_kmeans(embeddings: EmbeddingMatrix, k: int = NUM_LABELS, seed: int = 0,
               max_iterations: int = 100) -> KMeansModel:
    """Spherical k-means with k-means++ seeding, deterministic per seed.

    Points are unit-normalized; assignment maximizes cosine similarity and
    the update renormalizes per-cluster means.  Inertia is the summed
    cosine distance to the assigned centroid and is non-increasing across
    iterations (recorded in inertia_history).
    """
    points = _unit_rows(np.asarray(embeddings.rows, dtype=np.float64))
    n = points.shape[0]
    if n < k:
        raise ValueError(f"{n} rows is fewer than k={k} clusters")

    rng = np.random.default_rng(seed)
    # k-means++ seeding with cosine distance as the weight.
    centroids = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = points[first]
    dist = 1.0 - points @ centroids[0]
    for j in range(1, k):
        weights = np.clip(dist, 0.0, None)
        total = weights.sum()
        if total <= 0.0:
            choice = int(rng.integers(n))
        else:
            choice = int(rng.choice(n, p=weights / total))
        centroids[j] = points[choice]
        dist = np.minimum(dist, 1.0 - points @ centroids[j])

    assignments = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        sims = points @ centroids.T
        new_assignments = np.argmax(sims, axis=1)
        inertia = float(np.sum(1.0 - sims[np.arange(n), new_assignments]))
        history.append(inertia)
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
        for j in range(k):
            members = points[assignments == j]
            if len(members) == 0:
                continue  # empty cluster keeps its previous centroid
            mean = members.mean(axis=0)
            norm = np.linalg.norm(mean)
            if norm > 0.0:
                centroids[j] = mean / norm
    return KMeansModel(
        centroids=centroids,
        seed=seed,
        iterations=iterations,
        inertia=history[-1],
        inertia_history=history,
    )


def centroid_distances(model: KMeansModel, embedding) -> np.ndarray:
    """Cosine distance 1 - cos(embedding, centroid_k) per cluster."""
    embedding = np.asarray(embedding, dtype=np.float64)
    norm = np.linalg.norm(embedding)
    if norm == 0.0:
        raise ValueError("zero-norm embedding")
    if embedding.shape[0] != model.centroids.shape[1]:
        raise ValueError(
            f"embedding dim {embedding.shape[0]} != centroid dim {model.centroids.shape[1]}"
        )
    return 1.0 - model.centroids @ (embedding / norm)


def neighbor_frequencies(query, reference: EmbeddingMatrix, reference_labels,
                         n: int = 10, exclude_id: str | None = None) -> np.ndarray:
    """Technique frequencies among the n most cosine-similar reference rows.

    Ties in similarity break toward the lower reference index.  With
    exclude_id set, the query's own reference row never contributes
    (leakage-free training features).
    """
    query = np.asarray(query, dtype=np.float64)
    norm = np.linalg.norm(query)
    if norm == 0.0:
        raise ValueError("zero-norm query embedding")
    labels = np.asarray(reference_labels, dtype=np.float64)
    if labels.shape != (len(reference.ids), NUM_LABELS):
        raise ValueError("reference labels not aligned with reference rows")

    keep = np.ones(len(reference.ids), dtype=bool)
    if exclude_id is not None and exclude_id in reference.ids:
        keep[reference.ids.index(exclude_id)] = False
    available = int(keep.sum())
    if n > available:
        raise ValueError(f"n={n} neighbours requested but only {available} references available")

    sims = _unit_rows(reference.rows) @ (query / norm)
    candidates = np.flatnonzero(keep)
    order = candidates[np.argsort(-sims[candidates], kind="stable")]
    neighbours = order[:n]
    return labels[neighbours].sum(axis=0) / n


def meta_features(content: str) -> np.ndarray:
    """Eight deterministic meta-linguistic features of the raw text."""
    letters = [c for c in content if c.isalpha()]
    char_count = len(content)
    return np.array(
        [
            float(char_count),
            float(len(content.split())),
            float(content.count("?")),
            float(content.count("!")),
            1.0 if any(marker in content for marker in _URL_MARKERS) else 0.0,
            sum(1 for c in letters if c.isupper()) / len(letters) if letters else 0.0,
            sum(1 for c in content if c.isdigit()) / char_count if char_count else 0.0,
            float(content.count("\n")),
        ]
    )


def assemble_features(base, distances, text_freqs, trigger_freqs, meta) -> np.ndarray:
    """Concatenate the five feature blocks into the fixed 48-dim layout."""
    parts = [
        np.asarray(base, dtype=np.float64),
        np.asarray(distances, dtype=np.float64),
        np.asarray(text_freqs, dtype=np.float64),
        np.asarray(trigger_freqs, dtype=np.float64),
        np.asarray(meta, dtype=np.float64),
    ]
    expected = (NUM_LABELS, NUM_LABELS, NUM_LABELS, NUM_LABELS, len(META_FEATURE_NAMES))
    for part, want in zip(parts, expected):
        if part.shape != (want,):
            raise ValueError(f"feature block of shape {part.shape}, expected ({want},)")
    return np.concatenate(parts)
