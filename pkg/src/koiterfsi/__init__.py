"""Koiter shell coupled to an incompressible fluid on an ALE reference domain."""
__version__ = "0.1.0"
