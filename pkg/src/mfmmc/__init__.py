"""Malliavin Monte Carlo pricing of American options under mean-field jump dynamics."""

__version__ = "0.1.0"
