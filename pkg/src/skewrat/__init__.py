"""Renormalization of discrepancy skew products and flip-type random affine walks."""

__version__ = "0.1.0"
