"""Quantum noise of an optomechanical position meter.

Closed-form spectra for a mechanical oscillator read out through a
detuned optical cavity, sideband-asymmetry thermometry, force-sensitivity
limits, and a time-domain simulator that checks the spectra independently.
"""

from .model import (
    CavityParams,
    OscillatorParams,
    Params,
    SpectrumGrid,
    Units,
    ValidationError,
    WeakProbeWarning,
    params_from_mapping,
    validate,
)

__all__ = [
    "CavityParams",
    "OscillatorParams",
    "Params",
    "SpectrumGrid",
    "Units",
    "ValidationError",
    "WeakProbeWarning",
    "params_from_mapping",
    "validate",
]

__version__ = "0.1.0"
