"""Per-class decision-threshold calibration.

Samples are shuffled deterministically, split into contiguous folds, and
each fold is scanned over a fixed probability grid; the per-class
threshold is the median of the per-fold optima (mean of the two middle
values for even fold counts).  Within a fold the smallest grid value
attaining the maximal F1 wins, making the search fully deterministic.

Decision boundary convention everywhere: prob >= threshold is positive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import LABELS, NUM_LABELS
from .metrics import macro_f1

DEFAULT_GRID = (0.01, 0.99, 0.01)


def grid_values(grid=DEFAULT_GRID) -> np.ndarray:
    """Materialize a (start, stop, step) grid without float-accumulation fuzz."""
    start, stop, step = grid
    if step <= 0 or stop < start:
        raise ValueError(f"degenerate grid {grid}")
    count = int(round((stop - start) / step)) + 1
    values = np.round(start + step * np.arange(count), 12)
    return values[values <= stop + 1e-12]


@dataclass
class ThresholdSet:
    thresholds: list[float]  # one per technique, canonical order
    folds: int
    seed: int
    grid: tuple[float, float, float]
    fold_optima: list[list[float]]  # fold_optima[fold][technique]

    def __post_init__(self):
        if len(self.thresholds) != NUM_LABELS:
            raise ValueError(f"expected {NUM_LABELS} thresholds, got {len(self.thresholds)}")
        if len(self.fold_optima) != self.folds:
            raise ValueError("fold_optima length must equal the fold count")


def _binary_f1_over_grid(probs: np.ndarray, y: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """F1 of (probs >= tau) against y for every grid value tau."""
    pred = probs[None, :] >= grid[:, None]
    tp = np.sum(pred & (y == 1), axis=1)
    fp = np.sum(pred & (y == 0), axis=1)
    fn = np.sum(~pred & (y == 1), axis=1)
    denom = 2 * tp + fp + fn
    with np.errstate(invalid="ignore"):
        f1 = np.where(denom > 0, 2 * tp / np.where(denom > 0, denom, 1), 0.0)
    return f1


def best_grid_threshold(probs, y, grid: np.ndarray) -> float:
    """Smallest grid value attaining the maximal F1."""
    f1 = _binary_f1_over_grid(np.asarray(probs, float), np.asarray(y), grid)
    return float(grid[int(np.argmax(f1))])


def optimize_thresholds(probs, labels, folds: int = 5, seed: int = 0,
                        grid=DEFAULT_GRID) -> ThresholdSet:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int8)
    if probs.shape != labels.shape or probs.ndim != 2 or probs.shape[1] != NUM_LABELS:
        raise ValueError(f"misaligned inputs: probs {probs.shape}, labels {labels.shape}")
    n = probs.shape[0]
    if folds < 1:
        raise ValueError(f"folds must be >= 1, got {folds}")
    if n < folds:
        raise ValueError(f"{n} samples cannot fill {folds} folds")

    values = grid_values(grid)
    order = np.random.default_rng(seed).permutation(n)
    fold_optima: list[list[float]] = []
    for fold_indices in np.array_split(order, folds):
        optima = [
            best_grid_threshold(probs[fold_indices, c], labels[fold_indices, c], values)
            for c in range(NUM_LABELS)
        ]
        fold_optima.append(optima)
    per_class = np.array(fold_optima)  # (folds, 10)
    thresholds = [float(np.median(per_class[:, c])) for c in range(NUM_LABELS)]
    return ThresholdSet(
        thresholds=thresholds, folds=folds, seed=seed, grid=tuple(grid), fold_optima=fold_optima
    )


def apply_thresholds(probs, thresholds: ThresholdSet) -> np.ndarray:
    """Binarize probabilities; prob >= class threshold is positive."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    return (probs >= np.asarray(thresholds.thresholds)[None, :]).astype(np.int8)


def compare_to_global(probs, labels, thresholds: ThresholdSet) -> dict:
    """Macro-F1 under the calibrated thresholds vs a uniform 0.5 cutoff."""
    labels = np.asarray(labels, dtype=np.int8)
    calibrated, _, _ = macro_f1(labels, apply_thresholds(probs, thresholds))
    uniform = ThresholdSet(
        thresholds=[0.5] * NUM_LABELS, folds=1, seed=0, grid=DEFAULT_GRID,
        fold_optima=[[0.5] * NUM_LABELS],
    )
    global_f1, _, _ = macro_f1(labels, apply_thresholds(probs, uniform))
    return {"calibrated_macro_f1": calibrated, "global_0.5_macro_f1": global_f1}


def save_thresholds(thresholds: ThresholdSet, path) -> None:
    start, stop, step = thresholds.grid
    doc = {
        "labels": list(LABELS),
        "thresholds": thresholds.thresholds,
        "folds": thresholds.folds,
        "seed": thresholds.seed,
        "grid": {"start": start, "stop": stop, "step": step},
        "fold_optima": thresholds.fold_optima,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_thresholds(path) -> ThresholdSet:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("labels") != list(LABELS):
        raise ValueError(f"{path}: label order does not match the canonical order")
    grid = (doc["grid"]["start"], doc["grid"]["stop"], doc["grid"]["step"])
    return ThresholdSet(
        thresholds=doc["thresholds"], folds=doc["folds"], seed=doc["seed"],
        grid=grid, fold_optima=doc["fold_optima"],
    )
