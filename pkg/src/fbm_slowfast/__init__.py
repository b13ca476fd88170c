"""Slow-fast Navier-Stokes with fractional noise: simulation and verification toolkit."""

__version__ = "0.1.0"
