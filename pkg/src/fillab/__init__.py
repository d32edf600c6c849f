"""Filling invariants of simplicial hypersurfaces in Euclidean model patches."""

__version__ = "0.1.0"
