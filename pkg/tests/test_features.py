import numpy as np
import pytest

from manipdet.features import (
    FEATURE_DIM,
    assemble_features,
    centroid_distances,
    fit_kmeans,
    meta_features,
    neighbor_frequencies,
)
from manipdet.ingest import EmbeddingMatrix


def basis_matrix(dim=10):
    return EmbeddingMatrix(ids=[f"e{i}" for i in range(dim)], rows=np.eye(dim))


def test_kmeans_basis_vectors_zero_inertia():
    model = fit_kmeans(basis_matrix(), k=10, seed=0)
    assert model.inertia == pytest.approx(0.0, abs=1e-12)
    # every centroid equals one distinct basis vector
    matched = {int(np.argmax(c)) for c in model.centroids}
    assert matched == set(range(10))
    assert np.allclose(np.linalg.norm(model.centroids, axis=1), 1.0, atol=1e-9)


def test_kmeans_two_tight_groups():
    rows = np.array([
        [1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0],
    ])
    model = fit_kmeans(EmbeddingMatrix(ids=list("abcd"), rows=rows), k=2, seed=1)
    tops = sorted(int(np.argmax(c)) for c in model.centroids)
    assert tops == [0, 1]
    assert model.inertia == pytest.approx(0.0, abs=1e-12)


def test_kmeans_deterministic():
    rng = np.random.default_rng(5)
    matrix = EmbeddingMatrix(ids=[f"s{i}" for i in range(40)], rows=rng.normal(size=(40, 8)))
    a = fit_kmeans(matrix, k=5, seed=9)
    b = fit_kmeans(matrix, k=5, seed=9)
    assert a.centroids.tobytes() == b.centroids.tobytes()


def test_kmeans_inertia_non_increasing():
    rng = np.random.default_rng(6)
    matrix = EmbeddingMatrix(ids=[f"s{i}" for i in range(100)], rows=rng.normal(size=(100, 16)))
    model = fit_kmeans(matrix, k=10, seed=0)
    history = model.inertia_history
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))


def test_kmeans_too_few_rows():
    with pytest.raises(ValueError, match="fewer"):
        fit_kmeans(basis_matrix(4), k=10)


def test_kmeans_zero_row():
    rows = np.zeros((10, 4))
    rows[: 9] = np.random.default_rng(0).normal(size=(9, 4))
    with pytest.raises(ValueError, match="zero-norm"):
        fit_kmeans(EmbeddingMatrix(ids=[f"s{i}" for i in range(10)], rows=rows), k=2)


def test_centroid_distance_identical_is_zero():
    model = fit_kmeans(basis_matrix(), k=10, seed=0)
    d = centroid_distances(model, model.centroids[3])
    assert d[3] == pytest.approx(0.0, abs=1e-12)


def test_centroid_distance_orthogonal_and_antipodal():
    model = fit_kmeans(basis_matrix(2).__class__(ids=["a", "b"], rows=np.eye(2)), k=2, seed=0)
    e_other = model.centroids[1]
    d = centroid_distances(model, e_other)
    assert d[0] == pytest.approx(1.0, abs=1e-12)  # orthogonal
    d = centroid_distances(model, -model.centroids[0])
    assert d[0] == pytest.approx(2.0, abs=1e-12)  # antipodal bound


def test_centroid_distances_bounded_and_nearest_minimal(rng):
    matrix = EmbeddingMatrix(ids=[f"s{i}" for i in range(30)], rows=rng.normal(size=(30, 6)))
    model = fit_kmeans(matrix, k=4, seed=2)
    for row in matrix.rows:
        d = centroid_distances(model, row)
        assert np.all((d >= -1e-12) & (d <= 2.0 + 1e-12))


def test_neighbor_frequencies_hand_counted():
    rows = np.array([[1, 0.0], [0.99, 0.1], [0.98, 0.15]])
    reference = EmbeddingMatrix(ids=["a", "b", "c"], rows=rows)
    labels = np.zeros((3, 10))
    labels[0, 7] = 1                      # loaded_language
    labels[1, 7] = 1; labels[1, 5] = 1    # loaded_language + fud
    labels[2, 3] = 1                      # cliche
    freqs = neighbor_frequencies([1.0, 0.0], reference, labels, n=3)
    assert freqs[7] == pytest.approx(2 / 3)
    assert freqs[5] == pytest.approx(1 / 3)
    assert freqs[3] == pytest.approx(1 / 3)
    assert freqs.sum() == pytest.approx(4 / 3)


def test_neighbor_frequencies_unlabeled_zero(rng):
    reference = EmbeddingMatrix(ids=["a", "b", "c"], rows=rng.normal(size=(3, 4)))
    freqs = neighbor_frequencies(rng.normal(size=4), reference, np.zeros((3, 10)), n=3)
    assert np.all(freqs == 0.0)


def test_neighbor_self_always_included_without_exclusion(rng):
    rows = rng.normal(size=(10, 4))
    reference = EmbeddingMatrix(ids=[f"s{i}" for i in range(10)], rows=rows)
    labels = np.zeros((10, 10))
    labels[4, 0] = 1  # only the query's own row carries a label
    freqs = neighbor_frequencies(rows[4], reference, labels, n=1)
    assert freqs[0] == 1.0


def test_neighbor_exclusion_blocks_leakage(rng):
    rows = rng.normal(size=(10, 4))
    reference = EmbeddingMatrix(ids=[f"s{i}" for i in range(10)], rows=rows)
    labels = rng.integers(0, 2, size=(10, 10)).astype(float)
    base = neighbor_frequencies(rows[4], reference, labels, n=5, exclude_id="s4")
    perturbed = labels.copy()
    perturbed[4] = 1 - perturbed[4]
    after = neighbor_frequencies(rows[4], reference, perturbed, n=5, exclude_id="s4")
    assert np.array_equal(base, after)


def test_neighbor_n_exceeds_pool(rng):
    reference = EmbeddingMatrix(ids=["a", "b"], rows=rng.normal(size=(2, 3)))
    with pytest.raises(ValueError, match="available"):
        neighbor_frequencies(rng.normal(size=3), reference, np.zeros((2, 10)),
                             n=2, exclude_id="a")


def test_meta_features_url_and_question():
    f = meta_features("Привіт? http://a.b")
    assert f[1] == 2.0   # word count
    assert f[2] == 1.0   # question marks
    assert f[4] == 1.0   # url flag


def test_meta_features_empty():
    assert np.all(meta_features("") == 0.0)


def test_meta_features_case_ratio():
    f = meta_features("АБВ абв")
    assert f[5] == pytest.approx(0.5)
    assert f[0] == 7.0


def test_meta_features_telegram_link_and_digits():
    f = meta_features("дивись t.me/chan 123\n")
    assert f[4] == 1.0
    assert f[6] == pytest.approx(3 / len("дивись t.me/chan 123\n"))
    assert f[7] == 1.0


def test_meta_features_pure_function():
    assert np.array_equal(meta_features("аб! вг?"), meta_features("аб! вг?"))


def test_assemble_layout():
    out = assemble_features(np.zeros(10), np.zeros(10), np.zeros(10), np.zeros(10), np.zeros(8))
    assert out.shape == (FEATURE_DIM,)
    assert np.all(out == 0.0)
    base = np.zeros(10)
    base[7] = 0.9
    out = assemble_features(base, np.zeros(10), np.zeros(10), np.zeros(10), np.zeros(8))
    assert out[7] == 0.9 and out.sum() == 0.9


def test_assemble_round_trip(rng):
    parts = [rng.random(10), rng.random(10), rng.random(10), rng.random(10), rng.random(8)]
    out = assemble_features(*parts)
    slices = [slice(0, 10), slice(10, 20), slice(20, 30), slice(30, 40), slice(40, 48)]
    for part, sl in zip(parts, slices):
        assert np.array_equal(out[sl], part)


def test_assemble_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        assemble_features(rng.random(9), rng.random(10), rng.random(10),
                          rng.random(10), rng.random(8))
