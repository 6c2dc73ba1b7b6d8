"""Command-line entry points for the export jobs."""

from __future__ import annotations

import functools

import click

from .export import ExportJob, export_sentence_embeddings, export_token_embeddings


def _operational_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValueError, OSError, KeyError) as exc:
            raise click.ClickException(str(exc)) from exc
    return wrapper


_shared_options = [
    click.option("--dataset", required=True, type=click.Path(exists=True)),
    click.option("--encoder", default="hash:32", show_default=True,
                 help="hash:<dim>, st:<sentence-transformers id>, or a "
                      "Hugging Face model id."),
    click.option("--batch-size", default=32, show_default=True),
    click.option("--device", default=None, help="Device hint for real encoders."),
    click.option("--out", required=True, type=click.Path()),
]


def _add_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


@click.group()
def cli():
    """Embedding exporters for the manipulation-detection pipeline."""


@cli.command("export-sentences")
@_add_options(_shared_options)
@click.option("--triggers", is_flag=True,
              help="Embed concatenated trigger spans instead of full texts.")
@click.option("--unit-norm", is_flag=True, help="L2-normalize every row.")
@_operational_errors
def export_sentences(dataset, encoder, batch_size, device, out, triggers, unit_norm):
    """Write sentence embeddings as EMB1 plus the id sidecar."""
    job = ExportJob(dataset=dataset, out=out, encoder=encoder, batch_size=batch_size,
                    device=device, triggers=triggers, unit_norm=unit_norm)
    matrix = export_sentence_embeddings(job)
    click.echo(f"wrote {out} ({matrix.rows.shape[0]} x {matrix.rows.shape[1]})")


@cli.command("export-tokens")
@_add_options(_shared_options)
@_operational_errors
def export_tokens(dataset, encoder, batch_size, device, out):
    """Write per-token embeddings with code-point offsets as TEM1."""
    job = ExportJob(dataset=dataset, out=out, encoder=encoder,
                    batch_size=batch_size, device=device)
    seqs = export_token_embeddings(job)
    click.echo(f"wrote {out} ({len(seqs)} sequences)")


def main():
    cli()


if __name__ == "__main__":
    main()
