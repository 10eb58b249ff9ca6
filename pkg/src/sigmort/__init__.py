"""Mortality forecasting with signature-based functional decompositions."""

__version__ = "0.1.0"
