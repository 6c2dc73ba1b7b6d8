"""Embedding export glue: turns a dataset JSONL into the EMB1/TEM1
artifacts that the manipdet pipeline consumes."""

__version__ = "0.1.0"

from .export import ExportJob, export_sentence_embeddings, export_token_embeddings
from .offsets import byte_offsets_to_code_points

__all__ = [
    "ExportJob",
    "export_sentence_embeddings",
    "export_token_embeddings",
    "byte_offsets_to_code_points",
]
