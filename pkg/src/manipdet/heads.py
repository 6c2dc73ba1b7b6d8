"""Dual-head network over frozen, precomputed token embeddings.

Token head: one linear layer per token -> span probability.
Label head: concat([CLS], mean-pool, max-pool over non-special tokens)
-> linear to `hidden` -> exact GELU -> layernorm -> dropout -> linear to
the ten technique logits.

The joint loss is token BCE plus a down-weighted class BCE.  Gradients
are fully analytic (GELU derivative, complete layernorm backprop) and
checked against central finite differences by `gradcheck`.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .core import NUM_LABELS
from .ingest import ProbTable, TokenEmbeddingSequence
from .spanex import TokenProbSequence, token_labels_from_spans

PARAMS_FORMAT = "heads-v1"
_CLAMP = 1e-7


@dataclass
class HeadsConfig:
    dim: int
    hidden: int = 256
    classes: int = NUM_LABELS
    class_loss_weight: float = 0.3
    dropout: float = 0.1
    ln_eps: float = 1e-5
    seed: int = 0
    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 100
    batch_size: int = 8

    def __post_init__(self):
        if not 0.0 <= self.class_loss_weight < 1.0:
            raise ValueError(
                f"class loss weight must be in [0, 1), got {self.class_loss_weight}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.dim < 1 or self.hidden < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("dim, hidden, epochs and batch_size must be positive")


PARAM_NAMES = ("token_w", "token_b", "w1", "b1", "ln_gain", "ln_bias", "w2", "b2")


@dataclass
class HeadsParams:
    token_w: np.ndarray  # (D,)
    token_b: np.ndarray  # (1,)
    w1: np.ndarray       # (3D, H)
    b1: np.ndarray       # (H,)
    ln_gain: np.ndarray  # (H,)
    ln_bias: np.ndarray  # (H,)
    w2: np.ndarray       # (H, C)
    b2: np.ndarray       # (C,)

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "HeadsParams":
        return HeadsParams(**{k: v.copy() for k, v in self.arrays().items()})


def init_params(config: HeadsConfig) -> HeadsParams:
    """Seeded uniform +-1/sqrt(fan_in) weights; zero biases, unit gain."""
    rng = np.random.default_rng(config.seed)

    def uniform(fan_in, shape):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    d, h, c = config.dim, config.hidden, config.classes
    return HeadsParams(
        token_w=uniform(d, (d,)),
        token_b=np.zeros(1),
        w1=uniform(3 * d, (3 * d, h)),
        b1=np.zeros(h),
        ln_gain=np.ones(h),
        ln_bias=np.zeros(h),
        w2=uniform(h, (h, c)),
        b2=np.zeros(c),
    )


@dataclass
class ForwardTrace:
    tokens: np.ndarray
    special: np.ndarray
    pooled: np.ndarray
    pre_act: np.ndarray
    post_gelu: np.ndarray
    ln_mean: float
    ln_inv_std: float
    normalized: np.ndarray
    dropout_mask: np.ndarray
    token_probs: np.ndarray
    class_probs: np.ndarray


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def _gelu(x):
    return x * 0.5 * (1.0 + erf(x / math.sqrt(2.0)))


def _gelu_grad(x):
    cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return cdf + x * pdf


def forward(params: HeadsParams, seq: TokenEmbeddingSequence, mode: str = "eval",
            rng: np.random.Generator | None = None,
            config: HeadsConfig | None = None) -> tuple[np.ndarray, np.ndarray, ForwardTrace]:
    """Run both heads on one sequence.  Returns (token probs, class probs, trace)."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    tokens = np.asarray(seq.tokens, dtype=np.float64)
    if tokens.shape[0] < 1:
        raise ValueError("sequence must contain at least one token")
    if tokens.shape[1] != params.token_w.shape[0]:
        raise ValueError(
            f"embedding dim {tokens.shape[1]} != model dim {params.token_w.shape[0]}"
        )
    special = seq.special_mask()
    content = tokens[~special]
    if content.shape[0] == 0:
        raise ValueError(f"sample {seq.id!r}: no non-special tokens to pool")

    token_probs = _sigmoid(tokens @ params.token_w + params.token_b[0])
    pooled = np.concatenate([tokens[0], content.mean(axis=0), content.max(axis=0)])

    pre_act = params.w1.T @ pooled + params.b1
    post_gelu = _gelu(pre_act)
    ln_mean = float(post_gelu.mean())
    var = float(np.mean((post_gelu - ln_mean) ** 2))
    eps = config.ln_eps if config is not None else 1e-5
    inv_std = 1.0 / math.sqrt(var + eps)
    normalized = (post_gelu - ln_mean) * inv_std
    z = params.ln_gain * normalized + params.ln_bias

    p_drop = config.dropout if config is not None else 0.0
    if mode == "train" and p_drop > 0.0:
        if rng is None:
            raise ValueError("train mode with dropout requires an rng")
        mask = (rng.random(z.shape[0]) >= p_drop) / (1.0 - p_drop)
    else:
        mask = np.ones(z.shape[0])
    dropped = z * mask

    class_probs = _sigmoid(params.w2.T @ dropped + params.b2)
    trace = ForwardTrace(
        tokens=tokens, special=special, pooled=pooled, pre_act=pre_act,
        post_gelu=post_gelu, ln_mean=ln_mean, ln_inv_std=inv_std,
        normalized=normalized, dropout_mask=mask,
        token_probs=token_probs, class_probs=class_probs,
    )
    return token_probs, class_probs, trace


def loss(token_probs, token_gold, special_mask, class_probs, class_gold,
         class_weight: float) -> float:
    """Token BCE averaged over non-special tokens + weighted class BCE."""
    special_mask = np.asarray(special_mask, dtype=bool)
    keep = ~special_mask
    if not np.any(keep):
        raise ValueError("all tokens are masked")

    def bce(p, y):
        p = np.clip(p, _CLAMP, 1.0 - _CLAMP)
        y = np.asarray(y, dtype=np.float64)
        return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))

    token_term = bce(np.asarray(token_probs)[keep], np.asarray(token_gold)[keep])
    class_term = bce(class_probs, class_gold)
    return token_term + class_weight * class_term


def backward(params: HeadsParams, trace: ForwardTrace, token_gold, class_gold,
             class_weight: float) -> dict[str, np.ndarray]:
    """Analytic gradients of `loss` w.r.t. every parameter array."""
    keep = ~trace.special
    n_tok = int(keep.sum())
    if n_tok == 0:
        raise ValueError("all tokens are masked")
    token_gold = np.asarray(token_gold, dtype=np.float64)
    class_gold = np.asarray(class_gold, dtype=np.float64)

    # token head
    d_token_logits = np.where(keep, trace.token_probs - token_gold, 0.0) / n_tok
    grad_token_w = trace.tokens.T @ d_token_logits
    grad_token_b = np.array([d_token_logits.sum()])

    # class head output layer
    c = class_gold.shape[0]
    d_class_logits = class_weight * (trace.class_probs - class_gold) / c
    dropped = (params.ln_gain * trace.normalized + params.ln_bias) * trace.dropout_mask
    grad_w2 = np.outer(dropped, d_class_logits)
    grad_b2 = d_class_logits

    dz = (params.w2 @ d_class_logits) * trace.dropout_mask
    grad_ln_gain = dz * trace.normalized
    grad_ln_bias = dz.copy()

    # layernorm backprop through mean and variance
    d_norm = dz * params.ln_gain
    h = d_norm.shape[0]
    d_post = (trace.ln_inv_std / h) * (
        h * d_norm - d_norm.sum() - trace.normalized * (d_norm * trace.normalized).sum()
    )

    d_pre = d_post * _gelu_grad(trace.pre_act)
    grad_w1 = np.outer(trace.pooled, d_pre)
    grad_b1 = d_pre
    return {
        "token_w": grad_token_w,
        "token_b": grad_token_b,
        "w1": grad_w1,
        "b1": grad_b1,
        "ln_gain": grad_ln_gain,
        "ln_bias": grad_ln_bias,
        "w2": grad_w2,
        "b2": grad_b2,
    }


# ------------------------------------------------------------- training

def train(seqs, gold_spans, gold_labels, config: HeadsConfig) -> tuple[HeadsParams, list[float]]:
    """Adam training of both heads; encoder embeddings stay frozen.

    gold_spans: per-sequence list of CharSpan (token targets are derived
    from them); gold_labels: per-sequence 10-dim binary vectors.
    Deterministic for a fixed seed.
    """
    if not seqs:
        raise ValueError("empty training set")
    if not len(seqs) == len(gold_spans) == len(gold_labels):
        raise ValueError("sequences, spans and labels must align")
    token_targets = [token_labels_from_spans(spans, seq.offsets)
                     for seq, spans in zip(seqs, gold_spans)]
    class_targets = [np.asarray(y, dtype=np.float64) for y in gold_labels]

    params = init_params(config)
    rng = np.random.default_rng(config.seed + 1)
    moments1 = {k: np.zeros_like(v) for k, v in params.arrays().items()}
    moments2 = {k: np.zeros_like(v) for k, v in params.arrays().items()}
    step = 0
    history: list[float] = []
    n = len(seqs)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            grads = {k: np.zeros_like(v) for k, v in params.arrays().items()}
            batch_loss = 0.0
            for i in batch:
                t_probs, c_probs, trace = forward(
                    params, seqs[i], mode="train", rng=rng, config=config
                )
                batch_loss += loss(
                    t_probs, token_targets[i], trace.special, c_probs,
                    class_targets[i], config.class_loss_weight,
                )
                sample_grads = backward(
                    params, trace, token_targets[i], class_targets[i],
                    config.class_loss_weight,
                )
                for k in grads:
                    grads[k] += sample_grads[k]
            m = len(batch)
            batch_loss /= m
            epoch_losses.append(batch_loss)
            step += 1
            for k, g in grads.items():
                g = g / m
                moments1[k] = config.beta1 * moments1[k] + (1.0 - config.beta1) * g
                moments2[k] = config.beta2 * moments2[k] + (1.0 - config.beta2) * g * g
                m_hat = moments1[k] / (1.0 - config.beta1**step)
                v_hat = moments2[k] / (1.0 - config.beta2**step)
                new = getattr(params, k) - config.step_size * m_hat / (
                    np.sqrt(v_hat) + config.adam_eps
                )
                setattr(params, k, new)
        history.append(float(np.mean(epoch_losses)))
    return params, history


def predict(params: HeadsParams, seqs, config: HeadsConfig | None = None
            ) -> tuple[list[TokenProbSequence], ProbTable]:
    """Eval-mode inference: per-token span probs plus a class ProbTable."""
    token_seqs = []
    ids, rows = [], []
    for seq in seqs:
        t_probs, c_probs, _ = forward(params, seq, mode="eval", config=config)
        token_seqs.append(TokenProbSequence(id=seq.id, probs=t_probs, offsets=list(seq.offsets)))
        ids.append(seq.id)
        rows.append(c_probs)
    return token_seqs, ProbTable(ids=ids, probs=np.array(rows).reshape(len(ids), NUM_LABELS))


# ------------------------------------------------------------ gradcheck

def _flatten(arrays: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([arrays[name].ravel() for name in PARAM_NAMES])


def _unflatten(vector: np.ndarray, template: HeadsParams) -> HeadsParams:
    out = {}
    pos = 0
    for name in PARAM_NAMES:
        arr = getattr(template, name)
        out[name] = vector[pos:pos + arr.size].reshape(arr.shape).copy()
        pos += arr.size
    return HeadsParams(**out)


def gradcheck(dims=(4, 8, 16), token_counts=(1, 5, 17), hidden: int = 6,
              class_weight: float = 0.3, seed: int = 0, h: float = 1e-5) -> float:
    """Compare analytic gradients with central finite differences.

    Runs one random instance per (dim, token_count) combination in eval
    mode (dropout off) and returns the maximal relative error over all
    parameters and instances.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for d, t in itertools.product(dims, token_counts):
        config = HeadsConfig(dim=d, hidden=hidden, class_loss_weight=class_weight,
                             dropout=0.0, seed=int(rng.integers(2**31)))
        params = init_params(config)
        tokens = rng.normal(size=(t + 1, d))
        offsets = [(0, 0)] + [(2 * i, 2 * i + 2) for i in range(t)]
        seq = TokenEmbeddingSequence(id=f"g{d}x{t}", tokens=tokens, offsets=offsets)
        token_gold = rng.integers(0, 2, size=t + 1).astype(float)
        token_gold[0] = 0.0
        class_gold = rng.integers(0, 2, size=NUM_LABELS).astype(float)

        _, _, trace = forward(params, seq, mode="eval", config=config)
        analytic = _flatten(backward(params, trace, token_gold, class_gold, class_weight))

        base = _flatten(params.arrays())

        def loss_at(vector):
            p = _unflatten(vector, params)
            t_probs, c_probs, tr = forward(p, seq, mode="eval", config=config)
            return loss(t_probs, token_gold, tr.special, c_probs, class_gold, class_weight)

        numeric = np.empty_like(base)
        for i in range(base.size):
            plus, minus = base.copy(), base.copy()
            plus[i] += h
            minus[i] -= h
            numeric[i] = (loss_at(plus) - loss_at(minus)) / (2.0 * h)
        denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    return worst


# ---------------------------------------------------------- persistence

def save_params(params: HeadsParams, config: HeadsConfig, path) -> None:
    """Manifest JSON at `path`, f32 little-endian blocks at `path`.bin."""
    bin_path = str(path) + ".bin"
    manifest: dict = {"format": PARAMS_FORMAT, "config": vars(config), "arrays": {}}
    offset = 0
    with open(bin_path, "wb") as fh:
        for name in PARAM_NAMES:
            arr = np.ascontiguousarray(getattr(params, name), dtype="<f4")
            fh.write(arr.tobytes())
            manifest["arrays"][name] = {"shape": list(arr.shape), "offset": offset}
            offset += arr.nbytes
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def load_params(path) -> tuple[HeadsParams, HeadsConfig]:
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != PARAMS_FORMAT:
        raise ValueError(f"unsupported params format: {manifest.get('format')!r}")
    config = HeadsConfig(**manifest["config"])
    with open(str(path) + ".bin", "rb") as fh:
        blob = fh.read()
    arrays = {}
    for name in PARAM_NAMES:
        meta = manifest["arrays"][name]
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = meta["offset"]
        arr = np.frombuffer(blob[start:start + 4 * count], dtype="<f4")
        arrays[name] = arr.reshape(shape).astype(np.float64)
    return HeadsParams(**arrays), config
