"""Canonical domain types shared by every module.

The ten technique labels have a single fixed order that every vector,
CSV column layout and report row follows.  All character indices are
Unicode code points (Python string indices), never bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LABELS: tuple[str, ...] = (
    "appeal_to_fear",
    "bandwagon",
    "cherry_picking",
    "cliche",
    "euphoria",
    "fud",
    "glittering_generalities",
    "loaded_language",
    "straw_man",
    "whataboutism",
)
NUM_LABELS = len(LABELS)
LABEL_INDEX: dict[str, int] = {name: i for i, name in enumerate(LABELS)}


class UnknownTechniqueError(ValueError):
    """Raised when a technique string is not one of the ten labels."""

    def __init__(self, name: str):
        super().__init__(f"unknown technique: {name!r}")
        self.name = name


def parse_label(name: str) -> str:
    """Validate a technique string, returning the canonical form."""
    if name not in LABEL_INDEX:
        raise UnknownTechniqueError(name)
    return name


@dataclass(frozen=True, order=True)
class CharSpan:
    """Half-open character interval [start, end) into a sample's text."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0:
            raise ValueError(f"span start must be non-negative, got {self.start}")
        if self.start >= self.end:
            raise ValueError(f"span must satisfy start < end, got ({self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Sample:
    """One annotated social-media post."""

    id: str
    content: str
    lang: str | None = None
    techniques: frozenset[str] = field(default_factory=frozenset)
    trigger_spans: tuple[CharSpan, ...] = ()

    def __post_init__(self):
        for t in self.techniques:
            parse_label(t)


def label_vector_from_set(techniques) -> np.ndarray:
    """Binary vector over the canonical label order (dtype int8, length 10)."""
    bits = np.zeros(NUM_LABELS, dtype=np.int8)
    for t in techniques:
        bits[LABEL_INDEX[parse_label(t)]] = 1
    return bits


def label_set_from_vector(bits) -> frozenset[str]:
    """Inverse of label_vector_from_set."""
    bits = np.asarray(bits)
    if bits.shape != (NUM_LABELS,):
        raise ValueError(f"label vector must have length {NUM_LABELS}, got shape {bits.shape}")
    return frozenset(LABELS[i] for i in range(NUM_LABELS) if bits[i])


def check_prob_vector(probs) -> np.ndarray:
    """Validate a probability vector: length 10, every element in [0, 1]."""
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (NUM_LABELS,):
        raise ValueError(f"prob vector must have length {NUM_LABELS}, got shape {probs.shape}")
    if not np.all((probs >= 0.0) & (probs <= 1.0)):
        raise ValueError("probabilities must lie in [0, 1]")
    return probs


def validate_dataset(samples) -> list[str]:
    """Collect violations (duplicate ids, out-of-range spans, empty ids).

    Violations are data, not failures: the return value is a list of
    human-readable messages, empty iff the dataset is valid.
    """
    violations: list[str] = []
    seen: set[str] = set()
    for sample in samples:
        if not sample.id:
            violations.append("empty sample id")
        elif sample.id in seen:
            violations.append(f"duplicate id: {sample.id!r}")
        else:
            seen.add(sample.id)
        n = len(sample.content)
        for span in sample.trigger_spans:
            if span.end > n:
                violations.append(
                    f"sample {sample.id!r}: span ({span.start}, {span.end}) "
                    f"exceeds text length {n}"
                )
    return violations
