"""Numerical laboratory for a 2D Euler-Poisson system with friction and attractive
logarithmic self-interaction: finite-volume fluid solver, free-space Poisson
solver, mean-field particle simulator and diagnostics."""
__version__ = "0.1.0"
