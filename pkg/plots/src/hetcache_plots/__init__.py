"""Figure rendering for hetcache sweep results.

This package never imports the simulator; it consumes only the frozen CSV
schemas the harness emits (sweep rows, per-iteration traces, oracle gaps)
and turns them into static images.
"""
from .figures import FAMILIES, FigureSpec, SchemaError, render

__version__ = "0.1.0"

__all__ = ["FAMILIES", "FigureSpec", "SchemaError", "render", "__version__"]
