"""Numerical laboratory for symmetry breaking in scalar-field models
of layered networks: exact group-element algebra, the O(D) quartic
potential with a learning-rate-dependent mass, lattice field dynamics
(real-time and Euclidean), correlator measurement, and an instrumented
minimal neural-network harness, all driven by a deterministic
experiment runner."""

__version__ = "0.1.0"

from . import correlation, groups, lattice, nn, potential

__all__ = ["correlation", "groups", "lattice", "nn", "potential", "__version__"]
