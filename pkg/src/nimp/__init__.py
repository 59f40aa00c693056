"""Noninvasive measurement protocols for dynamic correlations in spin lattices."""

__version__ = "0.1.0"
