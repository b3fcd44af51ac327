"""Numerical laboratory for boundary realizations of exterior elliptic operators."""

__version__ = "0.1.0"
