"""Extraction shim: per-block attention-output and post-residual feature
maps from pretrained vision transformer checkpoints, written in the NPY +
JSON map-exchange layout consumed by the scoring toolkit."""

__version__ = "0.1.0"

from .extract import ExtractionSpec, UnsupportedModelError, extract

__all__ = ["ExtractionSpec", "UnsupportedModelError", "extract", "__version__"]
