"""Qualitative power networks, behaviour simulation and automated FMEA."""

__version__ = "0.1.0"
