"""Spectral-information-preserving augmentation for time series."""

__version__ = "0.1.0"
