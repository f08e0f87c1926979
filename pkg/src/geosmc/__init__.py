"""Geometric sliding-mode control on Lie groups and principal bundles."""

__version__ = "0.1.0"
