"""Continuum random field Ising chain: Gamma-extrema, one-sided diffusions,
closed-form observables and Monte-Carlo verification."""

__version__ = "0.1.0"
