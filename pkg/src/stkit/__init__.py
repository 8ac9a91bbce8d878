"""Desk-scale end-to-end speech translation toolkit."""

__version__ = "0.1.0"
