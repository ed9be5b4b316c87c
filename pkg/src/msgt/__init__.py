"""Concept-bottleneck classifier over structure-aware graph attention,
with expert-mixture feed-forward blocks and human-editable concept scores."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
