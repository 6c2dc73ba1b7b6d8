"""Shared-task evaluation metrics: macro-F1 over techniques and
character-level span F1, plus the per-class report and the technique
co-occurrence matrix.

Zero-division convention throughout: precision, recall or F1 with a zero
denominator evaluates to 0.  All ten classes always count in the macro
mean, including classes with zero gold support.
"""

from __future__ import annotations

import json

import numpy as np

from .core import LABELS, NUM_LABELS


def _f1_from_counts(tp: int, fp: int, fn: int) -> float:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def confusion_counts(gold, pred) -> np.ndarray:
    """Per-technique (tp, fp, fn) counts, shape (10, 3)."""
    gold = np.asarray(gold, dtype=np.int8)
    pred = np.asarray(pred, dtype=np.int8)
    if gold.shape != pred.shape:
        raise ValueError(f"gold shape {gold.shape} != pred shape {pred.shape}")
    if gold.ndim != 2 or gold.shape[1] != NUM_LABELS:
        raise ValueError(f"expected (n, {NUM_LABELS}) label matrices, got {gold.shape}")
    tp = np.sum((gold == 1) & (pred == 1), axis=0)
    fp = np.sum((gold == 0) & (pred == 1), axis=0)
    fn = np.sum((gold == 1) & (pred == 0), axis=0)
    return np.stack([tp, fp, fn], axis=1)


def macro_f1(gold, pred) -> tuple[float, list[float], list[int]]:
    """Macro-averaged F1 plus per-technique F1 and gold support."""
    counts = confusion_counts(gold, pred)
    per_class = [_f1_from_counts(tp, fp, fn) for tp, fp, fn in counts]
    supports = [int(tp + fn) for tp, _, fn in counts]
    return float(np.mean(per_class)), per_class, supports


def _char_set(spans) -> set[int]:
    chars: set[int] = set()
    for span in spans:
        chars.update(range(span.start, span.end))
    return chars


def span_f1(gold_spans, pred_spans) -> tuple[float, float, float]:
    """Micro-averaged character-overlap F1 over per-sample span lists.

    Both arguments are lists (one entry per sample) of CharSpan lists;
    per sample the spans are unioned into a character-index set before
    counting, so overlapping spans never double-count.
    """
    if len(gold_spans) != len(pred_spans):
        raise ValueError(f"{len(gold_spans)} gold samples vs {len(pred_spans)} predicted")
    inter = n_pred = n_gold = 0
    for gold, pred in zip(gold_spans, pred_spans):
        gold_chars = _char_set(gold)
        pred_chars = _char_set(pred)
        inter += len(gold_chars & pred_chars)
        n_pred += len(pred_chars)
        n_gold += len(gold_chars)
    precision = inter / n_pred if n_pred > 0 else 0.0
    recall = inter / n_gold if n_gold > 0 else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return f1, precision, recall


def classification_report(gold, pred) -> tuple[str, dict]:
    """Per-technique F1/support table, as aligned text and as JSON-ready dict."""
    macro, per_class, supports = macro_f1(gold, pred)
    width = max(len(name) for name in LABELS)
    lines = [f"{'technique':<{width}}  {'f1':>7}  {'support':>7}"]
    payload: dict = {}
    for name, f1, support in zip(LABELS, per_class, supports):
        lines.append(f"{name:<{width}}  {f1:>7.3f}  {support:>7d}")
        payload[name] = {"f1": f1, "support": support}
    lines.append(f"{'macro avg':<{width}}  {macro:>7.3f}  {sum(supports):>7d}")
    payload["macro_f1"] = macro
    return "\n".join(lines), payload


def report_to_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True)


def cooccurrence(samples) -> np.ndarray:
    """10x10 symmetric label co-occurrence counts; diagonal = label frequency."""
    matrix = np.zeros((NUM_LABELS, NUM_LABELS), dtype=np.int64)
    for sample in samples:
        indices = sorted(LABELS.index(t) for t in sample.techniques)
        for i in indices:
            matrix[i, i] += 1
            for j in indices:
                if j > i:
                    matrix[i, j] += 1
                    matrix[j, i] += 1
    return matrix
