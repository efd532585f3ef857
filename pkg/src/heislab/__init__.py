"""Numerical laboratory for uniform measures in the Heisenberg group."""

__version__ = "0.1.0"
