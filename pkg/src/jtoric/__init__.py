"""Numerical toolkit for transition-map flows on Delzant polytopes."""

from .kernels import HAVE_COMPILED

__version__ = "0.1.0"
__all__ = ["HAVE_COMPILED", "__version__"]
