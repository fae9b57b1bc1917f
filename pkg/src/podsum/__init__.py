"""Desk-scale two-stage podcast summarisation."""

__version__ = "0.1.0"
