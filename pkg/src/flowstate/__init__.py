"""Conditional normalizing-flow state estimation for nonlinear dynamical systems."""

__version__ = "0.1.0"
