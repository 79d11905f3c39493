"""Spectral geometry of rotationally symmetric sphere metrics."""

__version__ = "0.1.0"
