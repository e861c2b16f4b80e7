"""Spectral bands of thin periodic quantum waveguides.

Analytic one-dimensional dispersion models, finite-element threshold
scattering matrices of waveguide junctions and Floquet-Bloch band diagrams.
"""

from __future__ import annotations

from .mesh import GeometryTee
from .reduced_model import BandInterval, ModelParams, PerturbationCoeffs

__version__ = "0.1.0"

__all__ = ["BandInterval", "GeometryTee", "ModelParams", "PerturbationCoeffs", "__version__"]
