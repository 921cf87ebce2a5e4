"""Numerics for graph limits: graphons, densities, series and continuation."""

__version__ = "0.1.0"
