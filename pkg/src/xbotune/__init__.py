"""Explainable Bayesian-optimization tuning workbench for the egg-cooker benchmark."""

__version__ = "0.1.0"
