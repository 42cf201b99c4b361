"""Directed polymer in a correlated Gaussian environment, and Brownian pinning."""
from ._core import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
