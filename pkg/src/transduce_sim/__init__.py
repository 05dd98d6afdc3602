"""Pulsed microwave-to-optical transduction simulator."""
from .core import (DeviceParams, MechanicalMode, OperatorSet, QubitParams, backaction_rate,
                   build_operators, cooperativity, hz, to_hz, transmon_frequency)
from .config import load_profile, load_sequence
from .errors import (ConfigError, DomainError, EstimatorError, FitError, IntegrationError,
                     ResourceError, TransduceError, ValidityError)

__version__ = "0.1.0"

__all__ = [
    "DeviceParams", "MechanicalMode", "OperatorSet", "QubitParams", "backaction_rate",
    "build_operators", "cooperativity", "hz", "to_hz", "transmon_frequency",
    "load_profile", "load_sequence", "ConfigError", "DomainError", "EstimatorError",
    "FitError", "IntegrationError", "ResourceError", "TransduceError", "ValidityError",
]
