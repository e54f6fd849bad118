"""Explainable risk stratification for coded socio-demographic cohorts."""

__version__ = "0.1.0"
