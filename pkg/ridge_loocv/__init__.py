"""Exact ridge-regression LOOCV curves, their quasiconvexity, and the
simulation studies around it."""

from ridge_loocv.core.config import settings

__version__ = settings.VERSION

__all__ = ["__version__", "settings"]
