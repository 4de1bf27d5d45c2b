"""Reach-avoid model predictive control with certified polynomial terminal sets."""

__version__ = "0.1.0"
