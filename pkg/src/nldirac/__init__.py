"""Numerical laboratory for mode damping in the nonlinear Dirac equation."""

__version__ = "0.1.0"
