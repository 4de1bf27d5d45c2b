"""Figure scripts for reach-avoid MPC benchmark output directories."""

from .render import MissingColumn, PlotSpec, render

__all__ = ["MissingColumn", "PlotSpec", "render"]
