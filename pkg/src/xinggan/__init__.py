"""Pose-guided person image generation with crossed appearance/shape
attention, built on a small numpy autodiff engine."""

__version__ = "0.1.0"
