"""Earthquake catalog simulation, residual diagnostics and loss aggregation."""

__version__ = "0.1.0"
