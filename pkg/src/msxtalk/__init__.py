"""Crosstalk-dressed Molmer-Sorensen gate simulation and echo-based suppression."""

__version__ = "0.1.0"
