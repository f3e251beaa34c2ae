"""Numerical laboratory for dyadic adaptive control of semilinear
distributed-parameter systems."""

__version__ = "0.1.0"
