"""Numerical toolkit for sprays and Finsler functions on coordinate charts."""

__version__ = "0.1.0"
