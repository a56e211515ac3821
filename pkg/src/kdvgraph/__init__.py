"""Airy (linearized KdV) dynamics on metric graphs with Krein-space vertex conditions."""

__version__ = "0.1.0"
