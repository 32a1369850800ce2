"""Deterministic satellite-to-ground optical channel emulator."""

__version__ = "0.1.0"
