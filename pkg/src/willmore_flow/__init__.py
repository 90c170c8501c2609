"""Numerical lab for the graphical Willmore flow with clamped boundary data."""

__version__ = "0.1.0"
