"""Static figures from sinkhorn-mpc run outputs."""

from .figures import KINDS, FigureSpec, RenderInputError, render, render_hash

__version__ = "0.1.0"
