"""Kernel saturation laboratory: negative-image augmentation, image information
metrics, a small residual CNN with saturation instrumentation, and statistics."""

__version__ = "0.1.0"
