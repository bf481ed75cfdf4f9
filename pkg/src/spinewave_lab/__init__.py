"""Surrogate-based optimisation of CPG swimming gaits."""

__version__ = "0.1.0"
