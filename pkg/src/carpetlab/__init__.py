"""Fractal percolation carpets, GFF coarse-graining, path counting and SLE traces."""

__version__ = "0.1.0"

from .errors import CarpetLabError  # noqa: F401
