"""Heatmap rendering for swapsched stability-grid CSV outputs."""

from .render import GridData, GridFigureSpec, GridInputError, load_grid, render_grid

__version__ = "0.1.0"
