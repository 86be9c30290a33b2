"""Annealing failure-informed PINNs with subset-simulation resampling."""

__version__ = "0.1.0"
