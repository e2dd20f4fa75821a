"""Raman quantum memory simulation with built-in four-wave-mixing noise suppression."""
__version__ = "0.1.0"
