"""Reasoning-driven word sense disambiguation toolkit."""

__version__ = "0.1.0"
