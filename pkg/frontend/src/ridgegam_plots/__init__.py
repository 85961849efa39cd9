"""Contour-figure renderer for experiment CSV artifacts."""
from .render import PlotSpec, MissingColumnsError, EmptyCsvError, \
    render_contours

__all__ = ["PlotSpec", "MissingColumnsError", "EmptyCsvError",
           "render_contours"]
