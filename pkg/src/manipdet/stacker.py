"""Second-level multi-label classifier: a from-scratch gradient-boosted
regression-tree ensemble, one binary ensemble per technique.

Each round fits one tree to the logistic-loss residual y - p with exact
greedy squared-error splits; leaves output the Newton step
sum(residual) / sum(p * (1 - p)) clipped to [-4, 4].  No subsampling, so
a fixed seed reproduces the model byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import LABELS, NUM_LABELS

MODEL_FORMAT = "gbdt-v1"
LEAF_CLIP = 4.0
_PRIOR_EPS = 1e-6


@dataclass
class TrainConfig:
    rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 3
    min_leaf: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf must be >= 1, got {self.min_leaf}")


@dataclass
class GbdtModel:
    """Per-technique boosted ensembles plus the training loss curves."""

    config: TrainConfig
    feature_dim: int
    init_scores: list[float]
    trees: list[list[dict]]  # trees[class][round] = nested split/leaf dict
    losses: list[list[float]]  # losses[class][r] = training loss with r trees
    train_probs: np.ndarray | None = field(default=None, repr=False)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def _logloss(y, p):
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _best_split(x_col, grad, min_leaf):
    """Best squared-error split of one feature column.

    Returns (gain, threshold) or None.  Candidate thresholds are midpoints
    of consecutive distinct sorted values; the first (lowest) threshold
    attaining the maximal gain wins.
    """
    n = len(grad)
    order = np.argsort(x_col, kind="stable")
    xs = x_col[order]
    gs = grad[order]
    prefix = np.cumsum(gs)
    total = prefix[-1]

    # split after position i: left = 0..i, right = i+1..n-1
    counts_left = np.arange(1, n)
    valid = (xs[:-1] < xs[1:]) & (counts_left >= min_leaf) & (n - counts_left >= min_leaf)
    if not np.any(valid):
        return None
    sum_left = prefix[:-1]
    sum_right = total - sum_left
    # minimizing child SSE == maximizing sum of (child sum)^2 / child count
    score = sum_left**2 / counts_left + sum_right**2 / (n - counts_left)
    score[~valid] = -np.inf
    best = int(np.argmax(score))
    gain = float(score[best] - total**2 / n)
    if gain <= 0.0:
        return None
    threshold = float((xs[best] + xs[best + 1]) / 2.0)
    return gain, threshold


def _grow_tree(x, grad, hess, indices, depth, config):
    def leaf():
        value = float(np.clip(grad[indices].sum() / hess[indices].sum(), -LEAF_CLIP, LEAF_CLIP))
        return {"value": value}

    if depth >= config.max_depth or len(indices) < 2 * config.min_leaf:
        return leaf()
    best = None
    for f in range(x.shape[1]):
        found = _best_split(x[indices, f], grad[indices], config.min_leaf)
        if found is not None and (best is None or found[0] > best[0]):
            best = (found[0], f, found[1])
    if best is None:
        return leaf()
    _, feature, threshold = best
    go_left = x[indices, feature] <= threshold
    return {
        "feature": int(feature),
        "threshold": threshold,
        "left": _grow_tree(x, grad, hess, indices[go_left], depth + 1, config),
        "right": _grow_tree(x, grad, hess, indices[~go_left], depth + 1, config),
    }


def _tree_predict(tree, x):
    out = np.empty(x.shape[0])
    stack = [(tree, np.arange(x.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if "value" in node:
            out[idx] = node["value"]
            continue
        go_left = x[idx, node["feature"]] <= node["threshold"]
        stack.append((node["left"], idx[go_left]))
        stack.append((node["right"], idx[~go_left]))
    return out


def fit(features, labels, config: TrainConfig | None = None) -> GbdtModel:
    """Train one boosted ensemble per technique (one-vs-rest)."""
    config = config or TrainConfig()
    x = np.asarray(features, dtype=np.float64)
    y_all = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError(f"features must be a non-empty 2-D array, got shape {x.shape}")
    if y_all.shape != (x.shape[0], NUM_LABELS):
        raise ValueError(f"labels shape {y_all.shape} does not match {x.shape[0]} samples")

    init_scores, all_trees, all_losses = [], [], []
    train_probs = np.empty_like(y_all)
    for c in range(NUM_LABELS):
        y = y_all[:, c]
        prior = float(np.clip(y.mean(), _PRIOR_EPS, 1.0 - _PRIOR_EPS))
        init = float(np.log(prior / (1.0 - prior)))
        init_scores.append(init)
        scores = np.full(len(y), init)
        trees: list[dict] = []
        losses: list[float] = []
        degenerate = y.min() == y.max()
        for _ in range(config.rounds):
            p = _sigmoid(scores)
            losses.append(_logloss(y, p))
            if degenerate:
                continue  # constant class: keep the prior, grow no trees
            tree = _grow_tree(x, y - p, p * (1.0 - p), np.arange(len(y)), 0, config)
            trees.append(tree)
            scores = scores + config.learning_rate * _tree_predict(tree, x)
        train_probs[:, c] = _sigmoid(scores)
        all_trees.append(trees)
        all_losses.append(losses)
    return GbdtModel(
        config=config,
        feature_dim=x.shape[1],
        init_scores=init_scores,
        trees=all_trees,
        losses=all_losses,
        train_probs=train_probs,
    )


def predict_proba(model: GbdtModel, features) -> np.ndarray:
    """Per-sample probability vectors, shape (n, 10), strictly inside (0, 1)."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != model.feature_dim:
        raise ValueError(f"expected {model.feature_dim}-dim features, got {x.shape[1]}")
    probs = np.empty((x.shape[0], NUM_LABELS))
    for c in range(NUM_LABELS):
        scores = np.full(x.shape[0], model.init_scores[c])
        for tree in model.trees[c]:
            scores += model.config.learning_rate * _tree_predict(tree, x)
        probs[:, c] = _sigmoid(scores)
    return np.clip(probs, 1e-12, 1.0 - 1e-12)


def training_curve(model: GbdtModel) -> list[list[float]]:
    """Per-technique logistic-loss sequence; entry r is the loss with r trees."""
    return model.losses


def model_to_json(model: GbdtModel) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "labels": list(LABELS),
        "config": {
            "rounds": model.config.rounds,
            "learning_rate": model.config.learning_rate,
            "max_depth": model.config.max_depth,
            "min_leaf": model.config.min_leaf,
            "seed": model.config.seed,
        },
        "feature_dim": model.feature_dim,
        "init_scores": model.init_scores,
        "trees": model.trees,
        "losses": model.losses,
    }
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str) -> GbdtModel:
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format: {doc.get('format')!r}")
    return GbdtModel(
        config=TrainConfig(**doc["config"]),
        feature_dim=doc["feature_dim"],
        init_scores=doc["init_scores"],
        trees=doc["trees"],
        losses=doc["losses"],
    )


def save_model(model: GbdtModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(model))


def load_model(path) -> GbdtModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_json(fh.read())
