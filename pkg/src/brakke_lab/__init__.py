"""Numerical laboratory for curve-network mean curvature flow with boundary."""

__version__ = "0.1.0"
