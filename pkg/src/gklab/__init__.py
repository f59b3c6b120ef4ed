"""Numerical laboratory for total Gauss-Kronecker curvature in model spaces."""

__version__ = "0.1.0"
