"""Consensus-based optimization with self-interacting and mean-field dynamics."""

__version__ = "0.1.0"
