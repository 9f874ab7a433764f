"""Bayesian-optimization tuning of storage back-off terms in a plant MPC."""

__version__ = "0.1.0"
