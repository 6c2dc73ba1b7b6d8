import numpy as np
import pytest
from fastapi.testclient import TestClient

from manipdet.core import LABELS, NUM_LABELS
from manipdet.metrics import macro_f1
from manipdet.service import app

client = TestClient(app)


def test_labels_endpoint():
    response = client.get("/labels")
    assert response.status_code == 200
    assert response.json() == list(LABELS)


def test_evaluate_techniques_matches_library(rng):
    gold = (rng.random((20, NUM_LABELS)) < 0.3).astype(int)
    pred = (rng.random((20, NUM_LABELS)) < 0.3).astype(int)
    response = client.post("/evaluate/techniques",
                           json={"gold": gold.tolist(), "pred": pred.tolist()})
    assert response.status_code == 200
    payload = response.json()
    expected, per_class, _ = macro_f1(gold, pred)
    assert payload["macro_f1"] == pytest.approx(expected, abs=1e-12)
    assert set(payload["per_technique"]) == set(LABELS)
    for name, value in zip(LABELS, per_class):
        assert payload["per_technique"][name]["f1"] == pytest.approx(value, abs=1e-12)


def test_evaluate_techniques_shape_mismatch_422():
    response = client.post("/evaluate/techniques",
                           json={"gold": [[0] * NUM_LABELS], "pred": [[0] * 3]})
    assert response.status_code == 422


def test_evaluate_spans_perfect():
    spans = [[{"start": 0, "end": 5}], []]
    response = client.post("/evaluate/spans", json={"gold": spans, "pred": spans})
    assert response.status_code == 200
    assert response.json() == {"f1": 1.0, "precision": 1.0, "recall": 1.0}


def test_evaluate_spans_partial_overlap():
    gold = [[{"start": 0, "end": 4}]]
    pred = [[{"start": 2, "end": 6}]]
    response = client.post("/evaluate/spans", json={"gold": gold, "pred": pred})
    payload = response.json()
    assert payload["precision"] == 0.5 and payload["recall"] == 0.5


def test_evaluate_spans_invalid_span_422():
    response = client.post("/evaluate/spans",
                           json={"gold": [[{"start": 5, "end": 2}]], "pred": [[]]})
    assert response.status_code == 422


def test_extract_spans():
    body = {
        "probs": [0.9, 0.9, 0.8, 0.1],
        "offsets": [[0, 0], [0, 4], [5, 9], [10, 14]],
        "threshold": 0.5,
        "max_gap": 1,
    }
    response = client.post("/spans/extract", json=body)
    assert response.status_code == 200
    assert response.json() == {"spans": [{"start": 0, "end": 9}]}


def test_extract_spans_bad_threshold_422():
    body = {"probs": [0.5], "offsets": [[0, 2]], "threshold": 1.5}
    assert client.post("/spans/extract", json=body).status_code == 422


def test_apply_thresholds():
    probs = np.zeros((2, NUM_LABELS))
    probs[0, 0] = 0.4
    probs[1, 7] = 0.6
    thresholds = [0.4] * NUM_LABELS
    response = client.post("/thresholds/apply",
                           json={"probs": probs.tolist(), "thresholds": thresholds})
    assert response.status_code == 200
    payload = response.json()
    assert payload["labels"][0][0] == 1  # boundary: prob == threshold is positive
    assert payload["techniques"] == [["appeal_to_fear"], ["loaded_language"]]


def test_apply_thresholds_wrong_width_422():
    response = client.post("/thresholds/apply",
                           json={"probs": [[0.5] * NUM_LABELS], "thresholds": [0.5] * 3})
    assert response.status_code == 422


def test_meta_features():
    response = client.post("/features/meta",
                           json={"content": "Увага! https://example.com ДІЙ 2024\n"})
    assert response.status_code == 200
    features = response.json()["features"]
    assert features["url_flag"] == 1.0
    assert features["exclam_count"] == 1.0
    assert features["newline_count"] == 1.0
    assert features["char_count"] == 36.0


def test_meta_features_missing_content_422():
    assert client.post("/features/meta", json={}).status_code == 422
