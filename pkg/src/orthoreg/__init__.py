"""Numerical companion for higher differentiability of degenerate orthotropic minimizers."""

__version__ = "0.1.0"
