"""Directed Laplacian solvers and random walk quantities."""
__version__ = "0.1.0"
