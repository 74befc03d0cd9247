"""Recursive Laguerre smoothing filters and the enhance-before-detect pipeline."""

__version__ = "0.1.0"
