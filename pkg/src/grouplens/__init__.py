"""Similarity-grouping and singleton-detection analysis for transformer
encoders: stimulus synthesis, a from-scratch forward pass, map exchange,
and the grouping/saliency metric engines."""

__version__ = "0.1.0"

from .errors import (
    ContractViolation, FormatError, GrouplensError, IntegrityError,
    LayoutError, NumericError, ShapeError, SpecError,
)

__all__ = [
    "ContractViolation", "FormatError", "GrouplensError", "IntegrityError",
    "LayoutError", "NumericError", "ShapeError", "SpecError", "__version__",
]
