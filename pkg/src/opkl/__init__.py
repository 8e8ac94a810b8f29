"""Stochastic approximation for operator learning with operator-valued kernels."""

__version__ = "0.1.0"
