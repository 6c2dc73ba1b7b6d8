"""Instruction-prompt construction with similarity-selected few-shot
examples, emitted as JSONL for external language-model fine-tuning.

Each prompt carries the ten technique descriptions (a bundled, versioned
resource so the exact wording stays auditable) and four few-shot
examples drawn from the sub-500-character pool: two by text-to-text
cosine similarity, two by text-to-trigger-phrase similarity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .core import LABELS
from .ingest import EmbeddingMatrix

FEWSHOT_COUNT = 4
FEWSHOT_MAX_CHARS = 500
EMPTY_COMPLETION = "none"


def technique_descriptions() -> dict[str, str]:
    text = resources.files("manipdet.resources").joinpath(
        "technique_descriptions.json"
    ).read_text(encoding="utf-8")
    return json.loads(text)


def prompt_template() -> str:
    return resources.files("manipdet.resources").joinpath(
        "prompt_template.txt"
    ).read_text(encoding="utf-8")


@dataclass(frozen=True)
class PromptRecord:
    id: str
    prompt: str
    completion: str


def _top_by_similarity(target_vec, matrix: EmbeddingMatrix, candidate_ids, k):
    """k most cosine-similar candidate ids; ties break toward the lower id."""
    target_vec = np.asarray(target_vec, dtype=np.float64)
    target_vec = target_vec / np.linalg.norm(target_vec)
    scored = []
    for cid in candidate_ids:
        row = matrix.row_for(cid)
        sim = float(row @ target_vec / np.linalg.norm(row))
        scored.append((-sim, cid))
    scored.sort()
    return [cid for _, cid in scored[:k]]


def select_fewshots(target_id: str, text_embeddings: EmbeddingMatrix,
                    trigger_embeddings: EmbeddingMatrix, lengths: dict[str, int],
                    max_chars: int = FEWSHOT_MAX_CHARS) -> list[str]:
    """Pick 4 example ids: top-2 by text similarity, then top-2 by trigger
    similarity among the not-yet-picked.  Deterministic; the target never
    selects itself."""
    pool = [
        cid for cid in text_embeddings.ids
        if cid != target_id and lengths.get(cid, max_chars) < max_chars
    ]
    if len(pool) < FEWSHOT_COUNT:
        raise ValueError(
            f"few-shot pool for {target_id!r} has {len(pool)} candidates, need {FEWSHOT_COUNT}"
        )
    target_vec = text_embeddings.row_for(target_id)
    picked = _top_by_similarity(target_vec, text_embeddings, pool, 2)
    remaining = [cid for cid in pool if cid not in picked and cid in trigger_embeddings.ids]
    picked += _top_by_similarity(target_vec, trigger_embeddings, remaining, 2)
    if len(picked) < FEWSHOT_COUNT:
        raise ValueError(f"few-shot pool for {target_id!r} exhausted after trigger ranking")
    return picked


def completion_for(techniques) -> str:
    ordered = sorted(techniques, key=LABELS.index)
    return ", ".join(ordered) if ordered else EMPTY_COMPLETION


def build_prompts(samples, text_embeddings: EmbeddingMatrix,
                  trigger_embeddings: EmbeddingMatrix,
                  template: str | None = None) -> list[PromptRecord]:
    template = template if template is not None else prompt_template()
    descriptions = technique_descriptions()
    desc_block = "\n".join(f"- {name}: {descriptions[name]}" for name in LABELS)
    by_id = {s.id: s for s in samples}
    lengths = {s.id: len(s.content) for s in samples}

    records = []
    for sample in samples:
        fewshot_ids = select_fewshots(sample.id, text_embeddings, trigger_embeddings, lengths)
        example_block = "\n\n".join(
            f"Text: {by_id[fid].content}\nTechniques: {completion_for(by_id[fid].techniques)}"
            for fid in fewshot_ids
        )
        prompt = template.format(
            technique_descriptions=desc_block,
            examples=example_block,
            text=sample.content,
        )
        records.append(
            PromptRecord(id=sample.id, prompt=prompt,
                         completion=completion_for(sample.techniques))
        )
    return records


def write_prompts(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(
                {"id": record.id, "prompt": record.prompt, "completion": record.completion},
                ensure_ascii=False,
            ) + "\n")
