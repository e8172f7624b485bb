"""Batch figure renderer for regimeflow run directories.

Consumes only on-disk artifacts (CSV tables, JSON models); it never
imports the pipeline package, so the two components stay decoupled.
"""
__version__ = "0.1.0"

from .schemas import SchemaMismatch  # noqa: F401
from .figures import FIGURE_KINDS, FigureSpec, render, render_all  # noqa: F401
