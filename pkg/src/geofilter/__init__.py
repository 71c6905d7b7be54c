"""Geometric filter-function design of robust single-qubit pulses."""

__version__ = "0.1.0"
