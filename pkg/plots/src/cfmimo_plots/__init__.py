"""Offline figure generation for cfmimo sweep results."""

__version__ = "0.1.0"

from .render import FigureSpec, render  # noqa: F401
