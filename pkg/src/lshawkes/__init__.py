"""Simulation, estimation and time-invariance testing for locally stationary
Hawkes processes with a Bernstein-polynomial reproduction rate."""

from .core import EventSequence, ParamVector, RngStream, validate_events
from .intensity import ModelSpec, multivariate_spec, univariate_spec

__all__ = ["EventSequence", "ParamVector", "RngStream", "validate_events",
           "ModelSpec", "multivariate_spec", "univariate_spec"]
__version__ = "0.1.0"
