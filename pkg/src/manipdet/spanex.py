"""Token probabilities to character spans: thresholding, offset mapping,
gap merging, training-label construction and span-threshold calibration.

Special tokens are identified by the (0, 0) offset sentinel and never
contribute to spans or training labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibrate import DEFAULT_GRID, grid_values
from .core import CharSpan
from .metrics import span_f1


@dataclass
class TokenProbSequence:
    """Per-token span probabilities aligned with character offsets."""

    id: str
    probs: np.ndarray
    offsets: list[tuple[int, int]]

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 1 or len(self.probs) != len(self.offsets):
            raise ValueError(
                f"sample {self.id!r}: {len(self.probs)} probs for {len(self.offsets)} offsets"
            )
        if len(self.probs) and not np.all((self.probs >= 0.0) & (self.probs <= 1.0)):
            raise ValueError(f"sample {self.id!r}: token prob outside [0, 1]")


def merge_intervals(intervals, max_gap: int = 0) -> list[CharSpan]:
    """Merge intervals that overlap or sit within max_gap characters."""
    spans: list[CharSpan] = []
    for start, end in sorted(intervals):
        if spans and start - spans[-1].end <= max_gap:
            if end > spans[-1].end:
                spans[-1] = CharSpan(spans[-1].start, end)
        else:
            spans.append(CharSpan(start, end))
    return spans


def extract_spans(seq: TokenProbSequence, threshold: float, max_gap: int = 1) -> list[CharSpan]:
    """Character spans of tokens with prob >= threshold, gap-merged."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    if max_gap < 0:
        raise ValueError(f"max_gap must be >= 0, got {max_gap}")
    selected = []
    for prob, (start, end) in zip(seq.probs, seq.offsets):
        if (start, end) == (0, 0):
            continue
        if start >= end:
            raise ValueError(f"sample {seq.id!r}: malformed offset ({start}, {end})")
        if prob >= threshold:
            selected.append((start, end))
    return merge_intervals(selected, max_gap)


def token_labels_from_spans(spans, offsets) -> np.ndarray:
    """Binary training target per token: 1 iff the token's character
    interval overlaps any gold span by at least one character.  Special
    tokens are always 0."""
    labels = np.zeros(len(offsets), dtype=np.int8)
    for i, (start, end) in enumerate(offsets):
        if (start, end) == (0, 0):
            continue
        for span in spans:
            if start < span.end and span.start < end:
                labels[i] = 1
                break
    return labels


def optimize_span_threshold(seqs, gold_spans, folds: int = 5, seed: int = 0,
                            grid=DEFAULT_GRID, max_gap: int = 1) -> dict:
    """Single span threshold via k-fold medians of per-fold span-F1 optima.

    Returns {"threshold", "folds", "seed", "grid", "max_gap", "fold_optima"}.
    """
    if len(seqs) != len(gold_spans):
        raise ValueError(f"{len(seqs)} sequences vs {len(gold_spans)} gold span lists")
    n = len(seqs)
    if folds < 1:
        raise ValueError(f"folds must be >= 1, got {folds}")
    if n < folds:
        raise ValueError(f"{n} samples cannot fill {folds} folds")

    values = grid_values(grid)
    order = np.random.default_rng(seed).permutation(n)
    fold_optima = []
    for fold_indices in np.array_split(order, folds):
        fold_seqs = [seqs[i] for i in fold_indices]
        fold_gold = [gold_spans[i] for i in fold_indices]
        best_f1, best_tau = -1.0, values[0]
        for tau in values:
            pred = [extract_spans(seq, float(tau), max_gap) for seq in fold_seqs]
            f1, _, _ = span_f1(fold_gold, pred)
            if f1 > best_f1:
                best_f1, best_tau = f1, float(tau)
        fold_optima.append(best_tau)
    return {
        "threshold": float(np.median(fold_optima)),
        "folds": folds,
        "seed": seed,
        "grid": {"start": grid[0], "stop": grid[1], "step": grid[2]},
        "max_gap": max_gap,
        "fold_optima": fold_optima,
    }
