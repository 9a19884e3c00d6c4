"""Figure rendering for vibench harness CSV output."""

__version__ = "0.1.0"

from .render import (
    KINDS,
    EmptySelectionError,
    FigureSpec,
    MissingColumnsError,
    render,
)

__all__ = [
    "KINDS",
    "EmptySelectionError",
    "FigureSpec",
    "MissingColumnsError",
    "render",
]
