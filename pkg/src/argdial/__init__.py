"""Argumentative dialogue engine with a from-scratch neural NLU stack."""

__version__ = "0.1.0"
