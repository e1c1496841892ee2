"""Multivariate CAR models for event counts on road-network lattices."""
__version__ = "0.1.0"
