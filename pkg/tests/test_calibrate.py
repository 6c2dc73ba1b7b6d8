import numpy as np
import pytest

from manipdet.core import NUM_LABELS
from manipdet import calibrate
from manipdet.calibrate import (
    ThresholdSet,
    apply_thresholds,
    best_grid_threshold,
    compare_to_global,
    grid_values,
    optimize_thresholds,
)
from manipdet.metrics import macro_f1

from conftest import imbalanced_probs_labels


def spread(values, column, per_class):
    probs = np.full((len(values), NUM_LABELS), 0.0)
    probs[:, column] = values
    labels = np.zeros((len(values), NUM_LABELS), dtype=np.int8)
    labels[:, column] = per_class
    return probs, labels


def test_grid_default_values():
    values = grid_values()
    assert len(values) == 99
    assert values[0] == 0.01 and values[-1] == 0.99
    assert values[20] == 0.21


def test_degenerate_grid_rejected():
    with pytest.raises(ValueError, match="degenerate"):
        grid_values((0.5, 0.4, 0.1))
    with pytest.raises(ValueError, match="degenerate"):
        grid_values((0.1, 0.9, 0.0))


def test_single_fold_exhaustive_example():
    probs, labels = spread([0.9, 0.8, 0.2, 0.1], 0, [1, 1, 0, 0])
    result = optimize_thresholds(probs, labels, folds=1, seed=0)
    # oracle: exhaustive grid evaluation says F1 is 1.0 first at 0.21
    values = grid_values()
    f1_per_tau = []
    for tau in values:
        pred = (probs[:, 0] >= tau).astype(int)
        tp = int(((pred == 1) & (labels[:, 0] == 1)).sum())
        fp = int(((pred == 1) & (labels[:, 0] == 0)).sum())
        fn = int(((pred == 0) & (labels[:, 0] == 1)).sum())
        f1_per_tau.append(2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0)
    assert values[int(np.argmax(f1_per_tau))] == 0.21
    assert result.thresholds[0] == 0.21


def test_median_of_fold_optima():
    assert float(np.median([0.21, 0.35, 0.30])) == 0.30
    assert float(np.median([0.2, 0.4])) == pytest.approx(0.3)


def test_all_zero_class_ties_to_smallest_grid_value():
    probs = np.random.default_rng(0).random((12, NUM_LABELS))
    labels = np.zeros((12, NUM_LABELS), dtype=np.int8)
    labels[:, 0] = 1  # keep one class non-degenerate
    result = optimize_thresholds(probs, labels, folds=3, seed=0)
    for fold in result.fold_optima:
        assert fold[5] == 0.01


def test_fold_optimum_is_smallest_maximizer(rng):
    probs = rng.random((40, NUM_LABELS))
    labels = (rng.random((40, NUM_LABELS)) < 0.3).astype(np.int8)
    values = grid_values()
    result = optimize_thresholds(probs, labels, folds=2, seed=1)
    order = np.random.default_rng(1).permutation(40)
    for fold_indices, optima in zip(np.array_split(order, 2), result.fold_optima):
        for c in range(NUM_LABELS):
            # re-scan: no smaller grid value reaches the same F1
            best = best_grid_threshold(probs[fold_indices, c], labels[fold_indices, c], values)
            assert optima[c] == best


def test_determinism():
    probs, labels = imbalanced_probs_labels(100, seed=3)
    a = optimize_thresholds(probs, labels, folds=5, seed=7)
    b = optimize_thresholds(probs, labels, folds=5, seed=7)
    assert a == b


def test_apply_boundary_convention():
    ts = ThresholdSet(thresholds=[0.5] * NUM_LABELS, folds=1, seed=0,
                      grid=calibrate.DEFAULT_GRID, fold_optima=[[0.5] * NUM_LABELS])
    bits = apply_thresholds(np.full((1, NUM_LABELS), 0.5), ts)
    assert bits.sum() == NUM_LABELS  # prob == threshold counts as positive


def test_apply_high_threshold_all_negative(rng):
    ts = ThresholdSet(thresholds=[0.999] * NUM_LABELS, folds=1, seed=0,
                      grid=calibrate.DEFAULT_GRID, fold_optima=[[0.999] * NUM_LABELS])
    bits = apply_thresholds(rng.random((5, NUM_LABELS)) * 0.99, ts)
    assert bits.sum() == 0


def test_apply_order_invariant(rng):
    probs = rng.random((20, NUM_LABELS))
    ts = ThresholdSet(thresholds=[0.3] * NUM_LABELS, folds=1, seed=0,
                      grid=calibrate.DEFAULT_GRID, fold_optima=[[0.3] * NUM_LABELS])
    perm = rng.permutation(20)
    assert np.array_equal(apply_thresholds(probs, ts)[perm], apply_thresholds(probs[perm], ts))


def test_calibrated_recovers_separable_labels():
    probs, labels = spread([0.9, 0.8, 0.2, 0.1], 0, [1, 1, 0, 0])
    result = optimize_thresholds(probs, labels, folds=1, seed=0)
    assert np.array_equal(apply_thresholds(probs, result)[:, 0], labels[:, 0])


def test_compare_to_global_perfect_probs():
    labels = (np.random.default_rng(2).random((30, NUM_LABELS)) < 0.4).astype(np.int8)
    probs = labels.astype(float)
    result = optimize_thresholds(probs, labels, folds=2, seed=0)
    report = compare_to_global(probs, labels, result)
    assert report["calibrated_macro_f1"] == 1.0
    assert report["global_0.5_macro_f1"] == 1.0


def test_calibrated_beats_global_on_imbalanced_data():
    probs, labels = imbalanced_probs_labels(400, seed=0)
    result = optimize_thresholds(probs, labels, folds=5, seed=0)
    report = compare_to_global(probs, labels, result)
    assert report["calibrated_macro_f1"] >= report["global_0.5_macro_f1"]


def test_held_out_separable_data_reaches_one():
    labels = (np.random.default_rng(4).random((60, NUM_LABELS)) < 0.4).astype(np.int8)
    probs = labels * 0.9 + 0.05  # positives at 0.95, negatives at 0.05
    result = optimize_thresholds(probs[:40], labels[:40], folds=4, seed=0)
    held_macro, _, _ = macro_f1(labels[40:], apply_thresholds(probs[40:], result))
    assert held_macro == 1.0


def test_save_load_round_trip(tmp_path):
    probs, labels = imbalanced_probs_labels(60, seed=1)
    result = optimize_thresholds(probs, labels, folds=3, seed=2)
    path = tmp_path / "thresholds.json"
    calibrate.save_thresholds(result, path)
    back = calibrate.load_thresholds(path)
    assert back == result


def test_fold_count_validation():
    probs, labels = imbalanced_probs_labels(4, seed=0)
    with pytest.raises(ValueError):
        optimize_thresholds(probs, labels, folds=0)
    with pytest.raises(ValueError):
        optimize_thresholds(probs, labels, folds=10)
