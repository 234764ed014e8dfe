"""Variational matrix product states for a spin-orbit coupled XXZ chain."""

__version__ = "0.1.0"
