"""Synthetic plasmode simulation for causal inference in social networks."""
__version__ = "0.1.0"
