"""Spectral toolkit for a 2-D stochastic NLS equation with spatial white noise."""

from .grid import (
    ComplexField,
    Grid2D,
    RealField,
    complex_field,
    convolve,
    integrate,
    laplacian,
    load_field,
    real_field,
    save_field,
    spectral_derivative,
    weight_field,
)

__version__ = "0.1.0"
