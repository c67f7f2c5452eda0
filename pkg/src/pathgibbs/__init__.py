"""Gibbs measures on Brownian paths: transfer operators, CLT variance and SHE homogenization."""

__version__ = "0.1.0"
