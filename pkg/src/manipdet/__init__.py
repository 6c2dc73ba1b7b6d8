"""Manipulation-detection pipeline: metrics, stacked features, boosted
classifier, threshold calibration, dual-head token/label model, span
extraction and prompt generation."""

__version__ = "0.1.0"

from .core import LABELS, CharSpan, Sample  # noqa: F401
