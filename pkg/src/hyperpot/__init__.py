"""Hyperedge potentials for marked Gibbs point processes."""

__version__ = "0.1.0"
