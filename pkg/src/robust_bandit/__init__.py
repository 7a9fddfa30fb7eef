"""Robust two-armed bandit experimentation under multiplier preferences."""

__version__ = "0.1.0"
