"""Collapse dynamics of a free quantum particle under continuous position measurement-like noise.

Modules: units (constants and scaling), stochastic (noise), gauss1 and gauss2
(Gaussian closed forms), grid (split-step solver), master (averaged density),
ensemble (Monte Carlo harness), acceptance and cli.
"""
from .units import DIMLESS, Coefficients, ModelParams, ParameterError, derive_constants

__version__ = "0.1.0"

__all__ = ["DIMLESS", "Coefficients", "ModelParams", "ParameterError", "derive_constants", "__version__"]
