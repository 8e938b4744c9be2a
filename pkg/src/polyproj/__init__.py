"""Exact differentiable projection layers onto polyhedral sets."""

__version__ = "0.1.0"
