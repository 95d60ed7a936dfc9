"""Force-sensitivity budget of the oscillator used as a force probe."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import OscillatorParams, Params, Units
from .readout import s_yy
from .response import bath_force_psd, chi_freq


def s_f_total(omega, p: Params):
    """Output noise referred to force, ``S_yy / |chi|^2``.

    No clamping at the SQL: the cross-correlation term can dip below it.
    """
    w = np.asarray(omega, dtype=float)
    return s_yy(w, p).s_yy_total / np.abs(chi_freq(w, p.osc)) ** 2


def sql(omega, osc: OscillatorParams, units: Units = Units()):
    """Standard quantum limit ``2 hbar / |chi|``."""
    w = np.asarray(omega, dtype=float)
    detune = (w - osc.omega_m) * (w + osc.omega_m)
    return 2.0 * units.hbar * osc.mass * np.hypot(detune, osc.kappa_m * w)


def s_f_zp(osc: OscillatorParams, units: Units = Units()) -> float:
    """Zero-point force floor ``2 hbar m k_m w_m`` (frequency independent)."""
    return 2.0 * units.hbar * osc.mass * osc.kappa_m * osc.omega_m


def s_f_qtot(omega, osc: OscillatorParams, units: Units = Units()):
    return sql(omega, osc, units) + s_f_zp(osc, units)


def s_f_uncorrelated_bound(omega, osc: OscillatorParams, units: Units = Units()):
    """Lower bound on the force PSD when sensing and back-action noise are
    uncorrelated: SQL plus the bath force noise."""
    return sql(omega, osc, units) + bath_force_psd(osc, units)


def sql_zp_ratio(omega, osc: OscillatorParams, units: Units = Units()):
    """``(exact, approximate)`` ratio ``S_F^SQL / S_F^zp``.

    The approximation ``sqrt(1 + ((w - w_m)/(k_m/2))^2)`` holds for
    ``k_m << w_m`` and ``|w - w_m| << w_m``.
    """
    w = np.asarray(omega, dtype=float)
    exact = sql(w, osc, units) / s_f_zp(osc, units)
    approx = np.sqrt(1.0 + ((w - osc.omega_m) / (osc.kappa_m / 2.0)) ** 2)
    return exact, approx


@dataclass
class ForceBudget:
    omega: np.ndarray
    s_f_total: np.ndarray
    s_f_sql: np.ndarray
    s_f_zp: np.ndarray
    s_f_qtot: np.ndarray
    ratio_exact: np.ndarray
    ratio_approx: np.ndarray

    COLUMNS = ("omega", "s_f_total", "s_f_sql", "s_f_zp", "s_f_qtot", "ratio_exact", "ratio_approx")


def force_budget(omega, p: Params) -> ForceBudget:
    w = np.asarray(omega, dtype=float)
    s_sql = sql(w, p.osc, p.units)
    zp = np.full_like(w, s_f_zp(p.osc, p.units))
    exact, approx = sql_zp_ratio(w, p.osc, p.units)
    return ForceBudget(w, s_f_total(w, p), s_sql, zp, s_sql + zp, exact, approx)
