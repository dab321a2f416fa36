"""Residual minimization in discrete dual norms for 1-D L^p finite elements."""

__version__ = "0.1.0"
