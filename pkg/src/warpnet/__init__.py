"""Temporal transformer networks: learned, order-preserving time warping in
front of a time-series classifier, implemented in NumPy."""

__version__ = "0.1.0"
