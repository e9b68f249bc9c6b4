"""Numerics for the confined porous medium equation near the Barenblatt profile."""

__version__ = "0.1.0"
