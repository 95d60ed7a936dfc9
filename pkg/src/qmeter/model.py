"""Parameter records, validation and derived quantities.

All formulas in this package are dimensionally closed, so any consistent
unit system works.  The defaults are the dimensionless set
``hbar = m = omega_m = 1``.

Sign convention for the detuning: ``detuning = omega_r - omega_laser``.
A positive detuning places the laser below the cavity resonance and
selects the anti-Stokes sideband; a negative detuning selects the Stokes
sideband.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace
from typing import Any, Mapping

import numpy as np


class ValidationError(ValueError):
    """Base class for every parameter/config validation failure."""


class NonPositiveParameter(ValidationError):
    pass


class ZeroDetuning(ValidationError):
    pass


class OverdampedOscillator(ValidationError):
    pass


class InconsistentCoupling(ValidationError):
    pass


class WeakProbeWarning(UserWarning):
    """The readout is strong enough that the neglected O(G0^2) correction
    to the mechanical susceptibility may matter."""


# Threshold on S_FF^BA(peak) / S_FF^q above which WeakProbeWarning fires.
WEAK_PROBE_RATIO = 0.1


@dataclass(frozen=True)
class Units:
    hbar: float = 1.0


@dataclass(frozen=True)
class OscillatorParams:
    """Effective mechanical oscillator.

    ``kappa_m`` is the energy decay rate (full linewidth), ``n_occ`` the
    mean thermal occupation of the effective bath.
    """

    mass: float = 1.0
    omega_m: float = 1.0
    kappa_m: float = 0.01
    n_occ: float = 0.0

    @property
    def quality_factor(self) -> float:
        return self.omega_m / self.kappa_m


@dataclass(frozen=True)
class CavityParams:
    """Readout mode.  Only ``kappa_r``, ``detuning`` and ``g0_bar`` enter
    any computation; the remaining fields are descriptive metadata."""

    kappa_r: float = 0.1
    detuning: float = 1.0
    g0_bar: float = 1.0
    omega_r: float | None = None
    length: float | None = None
    amplitude: float | None = None


@dataclass(frozen=True)
class DerivedQuantities:
    x_zpf: float
    g0_bar_rate: float
    quality_factor: float


@dataclass(frozen=True)
class Params:
    """A validated parameter bundle.  Build it with :func:`validate`."""

    units: Units = field(default_factory=Units)
    osc: OscillatorParams = field(default_factory=OscillatorParams)
    cavity: CavityParams = field(default_factory=CavityParams)

    @property
    def hbar(self) -> float:
        return self.units.hbar

    def derived(self) -> DerivedQuantities:
        return derive(self.units, self.osc, self.cavity)

    def replace(self, *, allow_zero_coupling: bool = False, **changes: Any) -> "Params":
        """Return a re-validated copy with flat-key overrides applied.

        Keys are the configuration names (``kappa_m``, ``detuning``, ...)
        or the record field names (``g0_bar``, ``mass``, ...).
        """
        unit_kw, osc_kw, cav_kw = {}, {}, {}
        for key, value in changes.items():
            name = CONFIG_KEYS.get(key, key)
            if name in _UNIT_FIELDS:
                unit_kw[name] = value
            elif name in _OSC_FIELDS:
                osc_kw[name] = value
            elif name in _CAV_FIELDS:
                cav_kw[name] = value
            else:
                raise KeyError(f"unknown parameter {key!r}")
        return validate(
            replace(self.units, **unit_kw),
            replace(self.osc, **osc_kw),
            replace(self.cavity, **cav_kw),
            allow_zero_coupling=allow_zero_coupling,
        )


_UNIT_FIELDS = {f.name for f in fields(Units)}
_OSC_FIELDS = {f.name for f in fields(OscillatorParams)}
_CAV_FIELDS = {f.name for f in fields(CavityParams)}

# configuration key -> record field name
CONFIG_KEYS = {
    "hbar": "hbar",
    "mass": "mass",
    "omega_m": "omega_m",
    "kappa_m": "kappa_m",
    "n_occ": "n_occ",
    "kappa_r": "kappa_r",
    "detuning": "detuning",
    "g0_bar_coupling": "g0_bar",
    "omega_r": "omega_r",
    "cavity_length": "length",
    "amplitude": "amplitude",
}


def _positive(name: str, value: float) -> None:
    # NaN fails the comparison and lands here too
    if not (math.isfinite(value) and value > 0):
        raise NonPositiveParameter(f"{name} must be finite and > 0, got {value!r}")


def validate(
    units: Units | None = None,
    osc: OscillatorParams | None = None,
    cavity: CavityParams | None = None,
    *,
    allow_zero_coupling: bool = False,
) -> Params:
    """Check every record invariant and return the bundle.

    Exactly one exception is raised for an invalid input: the first
    violated invariant in the order hbar, oscillator, cavity.
    ``allow_zero_coupling`` admits ``g0_bar == 0``, used only by the
    time-domain vacuum control run.
    """
    units = units if units is not None else Units()
    osc = osc if osc is not None else OscillatorParams()
    cavity = cavity if cavity is not None else CavityParams()

    _positive("hbar", units.hbar)
    _positive("mass", osc.mass)
    _positive("omega_m", osc.omega_m)
    _positive("kappa_m", osc.kappa_m)
    if not (math.isfinite(osc.n_occ) and osc.n_occ >= 0):
        raise NonPositiveParameter(f"n_occ must be finite and >= 0, got {osc.n_occ!r}")
    if osc.kappa_m >= osc.omega_m:
        raise OverdampedOscillator(
            f"kappa_m={osc.kappa_m} must be below omega_m={osc.omega_m}"
        )

    _positive("kappa_r", cavity.kappa_r)
    if allow_zero_coupling and cavity.g0_bar == 0:
        pass
    else:
        _positive("g0_bar_coupling", cavity.g0_bar)
    if not math.isfinite(cavity.detuning):
        raise NonPositiveParameter(f"detuning must be finite, got {cavity.detuning!r}")
    if cavity.detuning == 0:
        raise ZeroDetuning("detuning must be nonzero")

    meta = (cavity.omega_r, cavity.length, cavity.amplitude)
    if all(v is not None for v in meta):
        for name, v in zip(("omega_r", "cavity_length", "amplitude"), meta):
            _positive(name, v)
        expected = cavity.amplitude * cavity.omega_r / cavity.length
        if abs(expected - cavity.g0_bar) > 1e-12 * abs(expected):
            raise InconsistentCoupling(
                f"g0_bar={cavity.g0_bar} differs from amplitude*omega_r/length={expected}"
            )

    params = Params(units, osc, cavity)
    if cavity.g0_bar > 0:
        _check_weak_probe(params)
    return params


def _check_weak_probe(p: Params) -> None:
    from .readout import s_ff_ba
    from .response import bath_force_psd

    k, d = p.cavity.kappa_r, abs(p.cavity.detuning)
    probe = np.array([p.osc.omega_m, d, math.sqrt(max(d * d - k * k / 4, 0.0))])
    peak, bath = float(np.max(s_ff_ba(probe, p))), bath_force_psd(p.osc, p.units)
    # the bath PSD can underflow for extreme m * kappa_m
    ratio = peak / bath if bath > 0 else math.inf
    if ratio > WEAK_PROBE_RATIO:
        warnings.warn(
            f"back-action force PSD peak is {ratio:.3g} x the bath force PSD; "
            "the weak-probe approximation is strained",
            WeakProbeWarning,
            stacklevel=3,
        )


def derive(
    units: Units, osc: OscillatorParams, cavity: CavityParams
) -> DerivedQuantities:
    x_zpf = math.sqrt(units.hbar / (2.0 * osc.mass * osc.omega_m))
    return DerivedQuantities(
        x_zpf=x_zpf,
        g0_bar_rate=cavity.g0_bar * x_zpf,
        quality_factor=osc.omega_m / osc.kappa_m,
    )


def params_from_mapping(data: Mapping[str, Any], **kw: Any) -> Params:
    """Build a validated bundle from the flat configuration keys.

    Unknown keys raise ``KeyError`` naming the key.
    """
    unit_kw, osc_kw, cav_kw = {}, {}, {}
    for key, value in data.items():
        if key not in CONFIG_KEYS:
            raise KeyError(key)
        name = CONFIG_KEYS[key]
        value = None if value is None else float(value)
        if name in _UNIT_FIELDS:
            unit_kw[name] = value
        elif name in _OSC_FIELDS:
            osc_kw[name] = value
        else:
            cav_kw[name] = value
    return validate(Units(**unit_kw), OscillatorParams(**osc_kw), CavityParams(**cav_kw), **kw)


def params_to_mapping(p: Params) -> dict[str, float]:
    out = {}
    for key, name in CONFIG_KEYS.items():
        for rec in (p.units, p.osc, p.cavity):
            if hasattr(rec, name):
                value = getattr(rec, name)
                if value is not None:
                    out[key] = value
    return out


@dataclass
class SpectrumGrid:
    """Frequency axis with spectral values and an optional component
    breakdown (each component has the same shape as ``values``)."""

    omega: np.ndarray
    values: np.ndarray
    components: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.values = np.asarray(self.values)
        if self.omega.shape != self.values.shape:
            raise ValueError("omega and values must have the same shape")
