"""Symmetry-adapted autoregressive generation of 3D molecular structures."""

__version__ = "0.1.0"
