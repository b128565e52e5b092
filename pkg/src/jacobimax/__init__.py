"""Extremes of the log-characteristic polynomial of random Jacobi matrices."""

__version__ = "0.1.0"
