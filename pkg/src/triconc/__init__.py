"""Simulation and exact checks for the triangle count of G(n, p)."""

__version__ = "0.1.0"
