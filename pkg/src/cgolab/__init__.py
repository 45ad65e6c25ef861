"""Desk-scale numerical laboratory for complex geometrical optics solutions
of the time-harmonic Maxwell system with variable parameters."""

__version__ = "0.1.0"
