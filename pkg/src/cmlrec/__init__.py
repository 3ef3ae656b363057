"""Collaborative metric learning for cold-start purchase prediction."""

__version__ = "0.1.0"
