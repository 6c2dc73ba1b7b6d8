"""Command-line surface: evaluation, feature building, stacker training,
threshold calibration, dual-head training/inference, span extraction and
prompt generation.

Every written artifact gets a JSON metadata sidecar (<path>.meta.json)
recording the command, its inputs, the seed and a timestamp, enough to
re-run the producing command.  Exit codes: 0 success, 1 operational
error, 2 usage error.
"""

from __future__ import annotations

import functools
import json
import sys
from datetime import datetime, timezone

import click
import numpy as np

from . import __version__, calibrate, heads, ingest, metrics, pipeline, promptgen, spanex, stacker
from .core import LABELS, label_set_from_vector, label_vector_from_set


def _write_sidecar(path, command: str, inputs: dict) -> None:
    meta = {
        "command": command,
        "inputs": {k: v for k, v in inputs.items() if v is not None},
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    with open(str(path) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, default=str)
        fh.write("\n")


def _operational_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValueError, OSError, KeyError) as exc:
            raise click.ClickException(str(exc)) from exc
    return wrapper


def _load_dataset(path):
    samples, report = ingest.read_dataset(path)
    for violation in report:
        click.echo(f"warning: {path}: {violation}", err=True)
    return samples


def _aligned_pred_labels(gold_samples, pred_samples):
    pred_by_id = {s.id: s for s in pred_samples}
    rows = []
    for sample in gold_samples:
        pred = pred_by_id.get(sample.id)
        rows.append(label_vector_from_set(pred.techniques if pred else ()))
    return np.stack(rows)


def _aligned_pred_spans(gold_samples, pred_samples):
    pred_by_id = {s.id: s for s in pred_samples}
    return [
        list(pred_by_id[s.id].trigger_spans) if s.id in pred_by_id else []
        for s in gold_samples
    ]


@click.group()
@click.version_option(__version__)
def cli():
    """Manipulation-detection pipeline tools."""


@cli.command("eval-techniques")
@click.option("--gold", required=True, type=click.Path(exists=True))
@click.option("--pred", required=True, type=click.Path(exists=True))
@click.option("--json-out", type=click.Path(), default=None,
              help="Also write the machine-readable report here.")
@_operational_errors
def eval_techniques(gold, pred, json_out):
    """Macro-F1 and the per-technique classification report."""
    gold_samples = _load_dataset(gold)
    pred_samples = ingest.read_predictions(pred)
    gold_matrix = pipeline.label_matrix(gold_samples)
    pred_matrix = _aligned_pred_labels(gold_samples, pred_samples)
    text, payload = metrics.classification_report(gold_matrix, pred_matrix)
    click.echo(text)
    click.echo(f"macro_f1: {payload['macro_f1']:.6f}")
    if json_out:
        with open(json_out, "w", encoding="utf-8") as fh:
            fh.write(metrics.report_to_json(payload) + "\n")
        _write_sidecar(json_out, "eval-techniques", {"gold": gold, "pred": pred})


@cli.command("eval-spans")
@click.option("--gold", required=True, type=click.Path(exists=True))
@click.option("--pred", required=True, type=click.Path(exists=True))
@_operational_errors
def eval_spans(gold, pred):
    """Character-level span F1."""
    gold_samples = _load_dataset(gold)
    pred_samples = ingest.read_predictions(pred)
    gold_spans = [list(s.trigger_spans) for s in gold_samples]
    pred_spans = _aligned_pred_spans(gold_samples, pred_samples)
    f1, precision, recall = metrics.span_f1(gold_spans, pred_spans)
    click.echo(f"span_f1: {f1:.6f}")
    click.echo(f"precision: {precision:.6f}")
    click.echo(f"recall: {recall:.6f}")


@cli.command("cooccurrence")
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@_operational_errors
def cooccurrence(dataset, out):
    """Write the 10x10 technique co-occurrence matrix as CSV."""
    samples = _load_dataset(dataset)
    matrix = metrics.cooccurrence(samples)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("technique," + ",".join(LABELS) + "\n")
        for name, row in zip(LABELS, matrix):
            fh.write(name + "," + ",".join(str(int(v)) for v in row) + "\n")
    _write_sidecar(out, "cooccurrence", {"dataset": dataset})
    click.echo(f"wrote {out}")


@cli.command("build-features")
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--probs", "probs_path", required=True, type=click.Path(exists=True),
              help="Base probability CSV from the upstream classifier.")
@click.option("--text-emb", required=True, type=click.Path(exists=True))
@click.option("--trigger-emb", required=True, type=click.Path(exists=True))
@click.option("--k", default=10, show_default=True)
@click.option("--n-neighbors", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--no-exclude-self", is_flag=True,
              help="Keep a sample's own row among its neighbours (inference mode).")
@click.option("--out", required=True, type=click.Path())
@_operational_errors
def build_features(dataset, probs_path, text_emb, trigger_emb, k, n_neighbors, seed,
                   no_exclude_self, out):
    """Assemble the 48-dim stacked feature matrix (EMB1 + id sidecar)."""
    samples = _load_dataset(dataset)
    base_probs = ingest.read_prob_table(probs_path)
    text = ingest.read_embedding_matrix(text_emb)
    trigger = ingest.read_embedding_matrix(trigger_emb)
    features, kmeans = pipeline.build_features_for_dataset(
        samples, base_probs, text, trigger, k=k, seed=seed,
        n_neighbors=n_neighbors, exclude_self=not no_exclude_self,
    )
    ingest.write_embedding_matrix(features, out)
    _write_sidecar(out, "build-features", {
        "dataset": dataset, "probs": probs_path, "text_emb": text_emb,
        "trigger_emb": trigger_emb, "k": k, "n_neighbors": n_neighbors,
        "seed": seed, "exclude_self": not no_exclude_self,
        "kmeans_inertia": kmeans.inertia,
    })
    click.echo(f"wrote {out} ({features.rows.shape[0]} x {features.rows.shape[1]})")


def _stacker_config(rounds, learning_rate, max_depth, min_leaf, seed):
    return stacker.TrainConfig(rounds=rounds, learning_rate=learning_rate,
                               max_depth=max_depth, min_leaf=min_leaf, seed=seed)


_stacker_options = [
    click.option("--rounds", default=200, show_default=True),
    click.option("--learning-rate", default=0.1, show_default=True),
    click.option("--max-depth", default=3, show_default=True),
    click.option("--min-leaf", default=5, show_default=True),
    click.option("--seed", default=0, show_default=True),
]


def _add_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


@cli.command("train-stacker")
@click.option("--features", "features_path", required=True, type=click.Path(exists=True))
@click.option("--dataset", required=True, type=click.Path(exists=True))
@_add_options(_stacker_options)
@click.option("--out", required=True, type=click.Path())
@_operational_errors
def train_stacker(features_path, dataset, rounds, learning_rate, max_depth, min_leaf,
                  seed, out):
    """Train the boosted one-vs-rest stacker on gold labels."""
    samples = _load_dataset(dataset)
    features = ingest.read_embedding_matrix(features_path)
    order = [features.ids.index(s.id) for s in samples]
    config = _stacker_config(rounds, learning_rate, max_depth, min_leaf, seed)
    model = stacker.fit(features.rows[order], pipeline.label_matrix(samples), config)
    stacker.save_model(model, out)
    _write_sidecar(out, "train-stacker", {
        "features": features_path, "dataset": dataset, "rounds": rounds,
        "learning_rate": learning_rate, "max_depth": max_depth,
        "min_leaf": min_leaf, "seed": seed,
    })
    final_losses = [curve[-1] for curve in stacker.training_curve(model)]
    click.echo(f"wrote {out}; final per-class training loss min/max: "
               f"{min(final_losses):.4f}/{max(final_losses):.4f}")


@cli.command("optimize-thresholds")
@click.option("--features", "features_path", required=True, type=click.Path(exists=True))
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--folds", default=5, show_default=True)
@_add_options(_stacker_options)
@click.option("--out", required=True, type=click.Path())
@_operational_errors
def optimize_thresholds(features_path, dataset, folds, rounds, learning_rate, max_depth,
                        min_leaf, seed, out):
    """Per-class thresholds from out-of-fold stacker probabilities.

    Trains one stacker per fold internally so every fold optimum is an
    honest validation score, then takes the per-class median.
    """
    samples = _load_dataset(dataset)
    features = ingest.read_embedding_matrix(features_path)
    order = [features.ids.index(s.id) for s in samples]
    labels = pipeline.label_matrix(samples)
    config = _stacker_config(rounds, learning_rate, max_depth, min_leaf, seed)
    thresholds, oof_probs = pipeline.calibrated_thresholds_from_features(
        features.rows[order], labels, folds, seed, config
    )
    calibrate.save_thresholds(thresholds, out)
    _write_sidecar(out, "optimize-thresholds", {
        "features": features_path, "dataset": dataset, "folds": folds,
        "rounds": rounds, "learning_rate": learning_rate, "max_depth": max_depth,
        "min_leaf": min_leaf, "seed": seed,
    })
    comparison = calibrate.compare_to_global(oof_probs, labels, thresholds)
    click.echo(f"wrote {out}")
    click.echo(f"out-of-fold macro_f1 calibrated: {comparison['calibrated_macro_f1']:.6f}")
    click.echo(f"out-of-fold macro_f1 global 0.5: {comparison['global_0.5_macro_f1']:.6f}")


@cli.command("predict")
@click.option("--features", "features_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--thresholds", "thresholds_path", required=True, type=click.Path(exists=True))
@click.option("--probs-out", type=click.Path(), default=None)
@click.option("--out", required=True, type=click.Path())
@_operational_errors
def predict(features_path, model_path, thresholds_path, probs_out, out):
    """Final label predictions: stacker probabilities + calibrated thresholds."""
    features = ingest.read_embedding_matrix(features_path)
    model = stacker.load_model(model_path)
    thresholds = calibrate.load_thresholds(thresholds_path)
    probs = stacker.predict_proba(model, features.rows)
    bits = calibrate.apply_thresholds(probs, thresholds)
    label_sets = [label_set_from_vector(row) for row in bits]
    ingest.write_label_predictions(features.ids, label_sets, out)
    _write_sidecar(out, "predict", {
        "features": features_path, "model": model_path, "thresholds": thresholds_path,
    })
    if probs_out:
        ingest.write_prob_table(ingest.ProbTable(ids=features.ids, probs=probs), probs_out)
        _write_sidecar(probs_out, "predict", {
            "features": features_path, "model": model_path,
        })
    click.echo(f"wrote {out}")


@cli.command("train-heads")
@click.option("--tokens", "tokens_path", required=True, type=click.Path(exists=True))
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--hidden", default=256, show_default=True)
@click.option("--class-loss-weight", default=0.3, show_default=True)
@click.option("--dropout", default=0.1, show_default=True)
@click.option("--epochs", default=100, show_default=True)
@click.option("--batch-size", default=8, show_default=True)
@click.option("--step-size", default=1e-3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@_operational_errors
def train_heads(tokens_path, dataset, hidden, class_loss_weight, dropout, epochs,
                batch_size, step_size, seed, out):
    """Train the dual-head model over precomputed token embeddings."""
    seqs = ingest.read_token_embeddings(tokens_path)
    samples = _load_dataset(dataset)
    by_id = {s.id: s for s in samples}
    missing = [seq.id for seq in seqs if seq.id not in by_id]
    if missing:
        raise click.ClickException(f"token sequences without dataset rows: {missing[:5]}")
    gold_spans = [list(by_id[seq.id].trigger_spans) for seq in seqs]
    gold_labels = [label_vector_from_set(by_id[seq.id].techniques) for seq in seqs]
    config = heads.HeadsConfig(
        dim=seqs[0].dim, hidden=hidden, class_loss_weight=class_loss_weight,
        dropout=dropout, epochs=epochs, batch_size=batch_size,
        step_size=step_size, seed=seed,
    )
    params, history = heads.train(seqs, gold_spans, gold_labels, config)
    heads.save_params(params, config, out)
    _write_sidecar(out, "train-heads", {
        "tokens": tokens_path, "dataset": dataset, "hidden": hidden,
        "class_loss_weight": class_loss_weight, "dropout": dropout,
        "epochs": epochs, "batch_size": batch_size, "step_size": step_size,
        "seed": seed,
    })
    click.echo(f"wrote {out}; training loss {history[0]:.4f} -> {history[-1]:.4f}")


@cli.command("predict-heads")
@click.option("--tokens", "tokens_path", required=True, type=click.Path(exists=True))
@click.option("--params", "params_path", required=True, type=click.Path(exists=True))
@click.option("--token-probs-out", required=True, type=click.Path())
@click.option("--probs-out", required=True, type=click.Path())
@_operational_errors
def predict_heads(tokens_path, params_path, token_probs_out, probs_out):
    """Eval-mode inference: token-probability CSV plus class ProbTable CSV."""
    seqs = ingest.read_token_embeddings(tokens_path)
    params, config = heads.load_params(params_path)
    token_seqs, prob_table = heads.predict(params, seqs, config)
    ingest.write_token_probs([(s.id, s.probs) for s in token_seqs], token_probs_out)
    ingest.write_prob_table(prob_table, probs_out)
    for path in (token_probs_out, probs_out):
        _write_sidecar(path, "predict-heads", {"tokens": tokens_path, "params": params_path})
    click.echo(f"wrote {token_probs_out} and {probs_out}")


@cli.command("extract-spans")
@click.option("--token-probs", "token_probs_path", required=True, type=click.Path(exists=True))
@click.option("--tokens", "tokens_path", required=True, type=click.Path(exists=True),
              help="TEM1 file supplying the character offsets.")
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--max-gap", default=1, show_default=True)
@click.option("--out", required=True, type=click.Path())
@_operational_errors
def extract_spans(token_probs_path, tokens_path, threshold, max_gap, out):
    """Threshold token probabilities and emit merged character spans."""
    probs_by_id = dict(ingest.read_token_probs(token_probs_path))
    seqs = ingest.read_token_embeddings(tokens_path)
    ids, span_lists = [], []
    for seq in seqs:
        if seq.id not in probs_by_id:
            raise click.ClickException(f"no token probabilities for sample {seq.id!r}")
        prob_seq = spanex.TokenProbSequence(
            id=seq.id, probs=probs_by_id[seq.id], offsets=list(seq.offsets)
        )
        ids.append(seq.id)
        span_lists.append(spanex.extract_spans(prob_seq, threshold, max_gap))
    ingest.write_predictions(ids, span_lists, out)
    _write_sidecar(out, "extract-spans", {
        "token_probs": token_probs_path, "tokens": tokens_path,
        "threshold": threshold, "max_gap": max_gap,
    })
    click.echo(f"wrote {out}")


@cli.command("optimize-span-threshold")
@click.option("--token-probs", "token_probs_path", required=True, type=click.Path(exists=True))
@click.option("--tokens", "tokens_path", required=True, type=click.Path(exists=True))
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--folds", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--max-gap", default=1, show_default=True)
@click.option("--out", required=True, type=click.Path())
@_operational_errors
def optimize_span_threshold(token_probs_path, tokens_path, dataset, folds, seed,
                            max_gap, out):
    """Calibrate the span threshold against span-level F1 via k-fold medians."""
    probs_by_id = dict(ingest.read_token_probs(token_probs_path))
    seqs = ingest.read_token_embeddings(tokens_path)
    samples = _load_dataset(dataset)
    by_id = {s.id: s for s in samples}
    prob_seqs, gold = [], []
    for seq in seqs:
        prob_seqs.append(spanex.TokenProbSequence(
            id=seq.id, probs=probs_by_id[seq.id], offsets=list(seq.offsets)
        ))
        gold.append(list(by_id[seq.id].trigger_spans))
    result = spanex.optimize_span_threshold(
        prob_seqs, gold, folds=folds, seed=seed, max_gap=max_gap
    )
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2)
        fh.write("\n")
    _write_sidecar(out, "optimize-span-threshold", {
        "token_probs": token_probs_path, "tokens": tokens_path, "dataset": dataset,
        "folds": folds, "seed": seed, "max_gap": max_gap,
    })
    click.echo(f"span threshold: {result['threshold']:.2f}")


@cli.command("gen-prompts")
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--text-emb", required=True, type=click.Path(exists=True))
@click.option("--trigger-emb", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@_operational_errors
def gen_prompts(dataset, text_emb, trigger_emb, out):
    """Build instruction prompts with four similarity-selected few-shots."""
    samples = _load_dataset(dataset)
    text = ingest.read_embedding_matrix(text_emb)
    trigger = ingest.read_embedding_matrix(trigger_emb)
    records = promptgen.build_prompts(samples, text, trigger)
    promptgen.write_prompts(records, out)
    _write_sidecar(out, "gen-prompts", {
        "dataset": dataset, "text_emb": text_emb, "trigger_emb": trigger_emb,
    })
    click.echo(f"wrote {len(records)} prompts to {out}")


@cli.command("gradcheck")
@click.option("--hidden", default=6, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--tolerance", default=1e-4, show_default=True)
@_operational_errors
def gradcheck(hidden, seed, tolerance):
    """Check analytic gradients against central finite differences."""
    worst = heads.gradcheck(hidden=hidden, seed=seed)
    click.echo(f"max relative error: {worst:.3e}")
    if worst >= tolerance:
        click.echo(f"FAIL: exceeds tolerance {tolerance:g}", err=True)
        sys.exit(1)
    click.echo(f"OK (tolerance {tolerance:g})")


def main():
    cli()


if __name__ == "__main__":
    main()
