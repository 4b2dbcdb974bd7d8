"""Langevin dynamics of soft-spherical p-spin models and their two-time limit equations."""

__version__ = "0.1.0"
