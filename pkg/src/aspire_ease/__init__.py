"""Asynchronous distributionally robust optimization: solver, simulator, service."""

__version__ = "0.1.0"
