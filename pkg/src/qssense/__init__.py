"""Simulation toolkit for search-based AC magnetometry."""

__version__ = "0.1.0"
