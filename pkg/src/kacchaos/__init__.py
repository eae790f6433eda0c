"""Kac particle systems for Maxwell molecules, couplings and W2 metrology."""

__version__ = "0.1.0"
