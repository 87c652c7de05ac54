"""Quantum-walk density profiles and topological phase identification."""

__version__ = "0.1.0"
