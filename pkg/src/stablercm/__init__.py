"""Numerics for time-dependent random conductance models with stable-like jumps."""

__version__ = "0.1.0"
