"""Hypermedia-driven coordination of process-control agents."""

__version__ = "0.1.0"
