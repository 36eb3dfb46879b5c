"""Collaborative CPPN image evolution with pluggable agents."""

__version__ = "0.1.0"
