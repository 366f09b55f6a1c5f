"""Adaptive fused orthogonal estimation for clustered multitask problems."""

__version__ = "0.1.0"
