"""Numerical toolkit for extreme-wave tail probabilities of the beating NLS equation."""

__version__ = "0.1.0"
