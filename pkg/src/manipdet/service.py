"""HTTP serving layer for the stateless operations: metric evaluation,
span extraction, threshold application and meta-feature computation.

Batch training stays on the CLI; this service exists so evaluation and
post-processing can be called by other processes without shelling out.
Run with: uvicorn manipdet.service:app
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__, metrics, spanex
from .calibrate import ThresholdSet, apply_thresholds
from .core import LABELS, NUM_LABELS, CharSpan, label_set_from_vector
from .features import META_FEATURE_NAMES, meta_features

app = FastAPI(title="manipdet", version=__version__)


class LabelEvalRequest(BaseModel):
    gold: list[list[int]] = Field(description="Per-sample 10-bit gold vectors")
    pred: list[list[int]] = Field(description="Per-sample 10-bit predicted vectors")


class LabelEvalResponse(BaseModel):
    macro_f1: float
    per_technique: dict[str, dict]


class SpanPair(BaseModel):
    start: int
    end: int


class SpanEvalRequest(BaseModel):
    gold: list[list[SpanPair]]
    pred: list[list[SpanPair]]


class SpanEvalResponse(BaseModel):
    f1: float
    precision: float
    recall: float


class ExtractRequest(BaseModel):
    probs: list[float]
    offsets: list[tuple[int, int]]
    threshold: float = 0.5
    max_gap: int = 1


class ExtractResponse(BaseModel):
    spans: list[SpanPair]


class ApplyThresholdsRequest(BaseModel):
    probs: list[list[float]]
    thresholds: list[float] = Field(min_length=NUM_LABELS, max_length=NUM_LABELS)


class ApplyThresholdsResponse(BaseModel):
    labels: list[list[int]]
    techniques: list[list[str]]


class MetaFeaturesResponse(BaseModel):
    features: dict[str, float]


def _spans(pairs: list[SpanPair]) -> list[CharSpan]:
    try:
        return [CharSpan(p.start, p.end) for p in pairs]
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


@app.get("/labels")
def labels() -> list[str]:
    return list(LABELS)


@app.post("/evaluate/techniques", response_model=LabelEvalResponse)
def evaluate_techniques(request: LabelEvalRequest) -> LabelEvalResponse:
    try:
        _, payload = metrics.classification_report(request.gold, request.pred)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    macro = payload.pop("macro_f1")
    return LabelEvalResponse(macro_f1=macro, per_technique=payload)


@app.post("/evaluate/spans", response_model=SpanEvalResponse)
def evaluate_spans(request: SpanEvalRequest) -> SpanEvalResponse:
    gold = [_spans(sample) for sample in request.gold]
    pred = [_spans(sample) for sample in request.pred]
    try:
        f1, precision, recall = metrics.span_f1(gold, pred)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return SpanEvalResponse(f1=f1, precision=precision, recall=recall)


@app.post("/spans/extract", response_model=ExtractResponse)
def extract(request: ExtractRequest) -> ExtractResponse:
    try:
        seq = spanex.TokenProbSequence(
            id="request", probs=request.probs, offsets=[tuple(o) for o in request.offsets]
        )
        spans = spanex.extract_spans(seq, request.threshold, request.max_gap)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return ExtractResponse(spans=[SpanPair(start=s.start, end=s.end) for s in spans])


@app.post("/thresholds/apply", response_model=ApplyThresholdsResponse)
def apply(request: ApplyThresholdsRequest) -> ApplyThresholdsResponse:
    threshold_set = ThresholdSet(
        thresholds=request.thresholds, folds=1, seed=0,
        grid=(0.01, 0.99, 0.01), fold_optima=[request.thresholds],
    )
    try:
        bits = apply_thresholds(request.probs, threshold_set)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return ApplyThresholdsResponse(
        labels=bits.tolist(),
        techniques=[sorted(label_set_from_vector(row), key=LABELS.index) for row in bits],
    )


@app.post("/features/meta", response_model=MetaFeaturesResponse)
def meta(text: dict) -> MetaFeaturesResponse:
    if "content" not in text:
        raise HTTPException(status_code=422, detail="body must contain 'content'")
    values = meta_features(text["content"])
    return MetaFeaturesResponse(
        features={name: float(v) for name, v in zip(META_FEATURE_NAMES, values)}
    )
