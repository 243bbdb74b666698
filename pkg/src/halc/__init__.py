"""Adaptive focal-contrast decoding engine with a synthetic visual world,
hallucination metrics and Monte-Carlo bound verification."""

__version__ = "0.1.0"
