"""Desk-scale video-imitation laboratory."""

__version__ = "0.1.0"
