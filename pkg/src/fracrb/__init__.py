"""Reduced basis solver for optimal control of time-fractional diffusion."""
__version__ = "0.1.0"
