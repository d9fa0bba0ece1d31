"""Numerical laboratory for toric cscK geometry: polytope stability, K-energy,
geodesic rays, the twisted continuity path on CP^1 and epsilon-geodesics."""

__version__ = "0.1.0"
