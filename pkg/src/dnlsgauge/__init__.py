"""Gauge transformations, Gibbs measures and flows for the derivative nonlinear Schrodinger equation."""

from .gauge import GaugeSpec
from .measures import McEstimate, MeasureConfig
from .spectral import SpectralField

__all__ = ["GaugeSpec", "McEstimate", "MeasureConfig", "SpectralField"]
