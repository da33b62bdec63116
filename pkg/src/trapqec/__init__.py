"""Trapped-ion quantum memory simulator built around the 7-qubit color code."""

__version__ = "0.1.0"
