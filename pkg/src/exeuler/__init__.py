"""Rigid body in a 2D perfect fluid: conformal-map vortex particle solver and estimate checks."""

__version__ = "0.1.0"
