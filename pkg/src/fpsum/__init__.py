"""Floating-point summation error laboratory."""

__version__ = "0.1.0"
