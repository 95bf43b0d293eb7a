"""Render persisted harness outputs (rates/sweep CSVs, fit JSON) as figures.

This package never runs simulations and never imports the solver package; it
consumes only the documented file formats, so slow compute stays separated
from fast iteration on presentation.
"""

from .figures import FigureKind, FigureRequest, SchemaError, render

__version__ = "0.1.0"
