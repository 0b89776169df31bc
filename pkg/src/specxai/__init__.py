"""Spectral measurement of gradient-explanation complexity and faithfulness."""

__version__ = "0.1.0"
