"""Adaptive surface finite elements for the Laplace-Beltrami problem."""

__version__ = "0.1.0"
