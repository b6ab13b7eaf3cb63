"""Dispersive sideband quantum logic in trapped-ion crystals."""

__version__ = "0.1.0"
