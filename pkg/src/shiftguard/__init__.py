"""Uncertainty-aware selective prediction for binary classifiers under dataset shift."""

__version__ = "0.1.0"
