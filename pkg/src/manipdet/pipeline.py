"""Wiring between modules: 48-dim feature assembly for whole datasets and
out-of-fold stacker probabilities for honest threshold calibration."""

from __future__ import annotations

import numpy as np

from . import calibrate, stacker
from .core import NUM_LABELS, label_vector_from_set
from .features import (
    KMeansModel,
    assemble_features,
    centroid_distances,
    fit_kmeans,
    meta_features,
    neighbor_frequencies,
)
from .ingest import EmbeddingMatrix, ProbTable


def label_matrix(samples) -> np.ndarray:
    return np.stack([label_vector_from_set(s.techniques) for s in samples])


def build_feature_matrix(samples, base_probs: ProbTable, text_embeddings: EmbeddingMatrix,
                         trigger_embeddings: EmbeddingMatrix, kmeans: KMeansModel,
                         reference_text: EmbeddingMatrix | None = None,
                         reference_trigger: EmbeddingMatrix | None = None,
                         reference_labels: np.ndarray | None = None,
                         n_neighbors: int = 10,
                         exclude_self: bool = True) -> EmbeddingMatrix:
    """Assemble one 48-dim FeatureVector per sample.

    With no explicit reference set, the dataset itself is the neighbour
    reference and self-exclusion keeps training features leakage-free.
    reference_labels must be aligned with reference_text.ids; trigger
    rows look their labels up by shared sample id.
    """
    if reference_text is None:
        reference_text = text_embeddings
        reference_trigger = trigger_embeddings
        labels_by_id = {s.id: label_vector_from_set(s.techniques) for s in samples}
        reference_labels = np.stack([labels_by_id[cid] for cid in reference_text.ids])
    if reference_trigger is None or reference_labels is None:
        raise ValueError("reference trigger embeddings and labels must come together")
    reference_labels = np.asarray(reference_labels)
    trigger_labels = reference_labels[
        [reference_text.ids.index(cid) for cid in reference_trigger.ids]
    ]

    prob_by_id = {cid: row for cid, row in zip(base_probs.ids, base_probs.probs)}
    rows = []
    for sample in samples:
        query = text_embeddings.row_for(sample.id)
        exclude = sample.id if exclude_self else None
        rows.append(assemble_features(
            prob_by_id[sample.id],
            centroid_distances(kmeans, query),
            neighbor_frequencies(query, reference_text, reference_labels,
                                 n=n_neighbors, exclude_id=exclude),
            neighbor_frequencies(query, reference_trigger, trigger_labels,
                                 n=n_neighbors, exclude_id=exclude),
            meta_features(sample.content),
        ))
    return EmbeddingMatrix(ids=[s.id for s in samples], rows=np.stack(rows))


def build_features_for_dataset(samples, base_probs, text_embeddings, trigger_embeddings,
                               k: int = NUM_LABELS, seed: int = 0, n_neighbors: int = 10,
                               exclude_self: bool = True) -> tuple[EmbeddingMatrix, KMeansModel]:
    kmeans = fit_kmeans(trigger_embeddings, k=k, seed=seed)
    features = build_feature_matrix(
        samples, base_probs, text_embeddings, trigger_embeddings, kmeans,
        n_neighbors=n_neighbors, exclude_self=exclude_self,
    )
    return features, kmeans


def out_of_fold_probs(features, labels, folds: int, seed: int,
                      config: stacker.TrainConfig) -> np.ndarray:
    """Stacker probabilities where each sample is predicted by a model
    trained on the other folds; feeds honest threshold calibration."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    n = features.shape[0]
    if folds < 2:
        raise ValueError(f"out-of-fold probabilities need folds >= 2, got {folds}")
    if n < folds:
        raise ValueError(f"{n} samples cannot fill {folds} folds")
    order = np.random.default_rng(seed).permutation(n)
    probs = np.empty((n, NUM_LABELS))
    for fold_indices in np.array_split(order, folds):
        train_mask = np.ones(n, dtype=bool)
        train_mask[fold_indices] = False
        model = stacker.fit(features[train_mask], labels[train_mask], config)
        probs[fold_indices] = stacker.predict_proba(model, features[fold_indices])
    return probs


def calibrated_thresholds_from_features(features, labels, folds: int, seed: int,
                                        config: stacker.TrainConfig,
                                        grid=calibrate.DEFAULT_GRID) -> tuple:
    """Out-of-fold probs + per-class threshold optimization in one step."""
    probs = out_of_fold_probs(features, labels, folds, seed, config)
    thresholds = calibrate.optimize_thresholds(probs, labels, folds=folds, seed=seed, grid=grid)
    return thresholds, probs
