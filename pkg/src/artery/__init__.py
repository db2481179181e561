"""Signalized arterial corridor simulation and travel-time distribution learning."""

__version__ = "0.1.0"
