"""Numerical laboratory for Fourier decay of dynamically defined measures."""

__version__ = "0.1.0"
