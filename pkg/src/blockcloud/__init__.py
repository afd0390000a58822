"""Deterministic BlockCloud protocol library and discrete-event simulator."""

__version__ = "0.1.0"
