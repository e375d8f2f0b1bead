"""Certified numerics for a planar self-similar measure built from a complex Pisot number."""

__version__ = "0.1.0"
