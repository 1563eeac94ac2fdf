"""Detect multi-source coverage bursts in news feeds and turn them into posts."""

__version__ = "0.1.0"
