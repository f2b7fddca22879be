"""Simulation and statistical verification lab for one-dimensional SDEs
with a singular boundary at zero: Bessel-type diffusions, Skorokhod
reflection, occupation/local-time identities, scale and time-change
reduction to reflected Brownian motion, and the Monte Carlo machinery to
test all of it reproducibly."""

from .core import (
    CoefficientSpec,
    NoiseSource,
    Path,
    Representation,
    SdeProblem,
    TimeGrid,
    make_grid,
    noise_streams,
    sample_brownian,
)
from .bessel_analytic import BesselParams

__all__ = [
    "CoefficientSpec",
    "NoiseSource",
    "Path",
    "Representation",
    "SdeProblem",
    "TimeGrid",
    "make_grid",
    "noise_streams",
    "sample_brownian",
    "BesselParams",
]

__version__ = "0.1.0"
