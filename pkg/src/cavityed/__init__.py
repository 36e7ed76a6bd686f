"""Exact diagonalization of lattice two-level dipoles coupled to one cavity mode."""

__version__ = "0.1.0"
