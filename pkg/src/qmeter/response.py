"""Mechanical response: susceptibility, bath force noise, displacement noise."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .model import OscillatorParams, Units, ValidationError


class GridTooNarrow(ValidationError):
    pass


# Half-width (in units of kappa_m) the integration grid must span around omega_m.
MIN_GRID_HALFWIDTH = 50.0


def chi_freq(omega, osc: OscillatorParams):
    """Complex susceptibility ``-1 / (m (w^2 - w_m^2 + i k_m w))``.

    Fourier transform of the causal half of the time-domain kernel, with
    the ``exp(-i w t)`` convention, so ``Im chi > 0`` for ``w > 0``.
    """
    w = np.asarray(omega, dtype=float)
    # factored difference keeps precision for w close to omega_m
    detune = (w - osc.omega_m) * (w + osc.omega_m)
    return -1.0 / (osc.mass * (detune + 1j * osc.kappa_m * w))


def chi_time(t, osc: OscillatorParams):
    """Time-domain kernel ``exp(-k_m|t|/2) sin(w_m t) / (m w_m)``."""
    t = np.asarray(t, dtype=float)
    return (
        np.exp(-0.5 * osc.kappa_m * np.abs(t))
        * np.sin(osc.omega_m * t)
        / (osc.mass * osc.omega_m)
    )


def bath_force_psd(osc: OscillatorParams, units: Units = Units()) -> float:
    """White single-sided force PSD of the effective bath,
    ``(4n + 2) hbar m k_m w_m``."""
    return (4.0 * osc.n_occ + 2.0) * units.hbar * osc.mass * osc.kappa_m * osc.omega_m


def displacement_psd(omega, osc: OscillatorParams, units: Units = Units()):
    """Bath-driven displacement PSD ``|chi|^2 S_FF^q``."""
    return np.abs(chi_freq(omega, osc)) ** 2 * bath_force_psd(osc, units)


def heisenberg_displacement_bound(omega, osc: OscillatorParams, units: Units = Units()):
    """Lower bound ``2 hbar Im chi`` on the displacement PSD (tight at n = 0)."""
    return 2.0 * units.hbar * chi_freq(omega, osc).imag


def chi_sq_antiderivative(omega, osc: OscillatorParams):
    """Exact antiderivative of ``|chi(w)|^2`` for finite ``w``.

    ``|chi|^2`` splits into two Lorentzian-like terms centred at
    ``+-w1 - i k_m/2`` with ``w1 = sqrt(w_m^2 - k_m^2/4)``; each integrates
    to a log plus an arctan.  ``F(inf) - F(0) = pi / (2 m^2 k_m w_m^2)``.
    """
    w = np.asarray(omega, dtype=float)
    g = 0.5 * osc.kappa_m
    wm2 = osc.omega_m**2
    w1 = np.sqrt(wm2 - g * g)
    a = -1.0 / (4.0 * w1 * wm2)
    with np.errstate(divide="ignore"):
        log_part = 0.5 * a * (np.log((w - w1) ** 2 + g * g) - np.log((w + w1) ** 2 + g * g))
    atan_part = (np.arctan((w - w1) / g) + np.arctan((w + w1) / g)) / (4.0 * wm2 * g)
    return (log_part + atan_part) / osc.mass**2


def _chi_sq_mass(lo: float, hi: float, osc: OscillatorParams) -> float:
    if np.isinf(hi):
        # log terms vanish at infinity, each arctan tends to pi/2
        top = np.pi / (2.0 * osc.kappa_m * osc.omega_m**2 * osc.mass**2)
    else:
        top = chi_sq_antiderivative(hi, osc)
    return float(top - chi_sq_antiderivative(lo, osc))


def integrated_zero_point_variance(
    osc: OscillatorParams, units: Units = Units(), grid=None
) -> float:
    """``int_0^inf S_xx^q dw / 2pi`` at zero occupancy.

    Composite trapezoid over ``grid`` plus the exact mass of ``|chi|^2``
    outside the grid edges.  The grid must span ``w_m +- 50 k_m``.
    """
    osc = replace(osc, n_occ=0.0)
    if grid is None:
        grid = np.linspace(
            max(osc.omega_m - 2 * MIN_GRID_HALFWIDTH * osc.kappa_m, 0.0),
            osc.omega_m + 2 * MIN_GRID_HALFWIDTH * osc.kappa_m,
            4001,
        )
    grid = np.asarray(grid, dtype=float)
    lo_need = osc.omega_m - MIN_GRID_HALFWIDTH * osc.kappa_m
    hi_need = osc.omega_m + MIN_GRID_HALFWIDTH * osc.kappa_m
    if grid.ndim != 1 or grid.size < 2 or grid[0] > max(lo_need, 0.0) or grid[-1] < hi_need:
        raise GridTooNarrow(
            f"grid must span [{max(lo_need, 0.0)}, {hi_need}] "
            f"(omega_m +- {MIN_GRID_HALFWIDTH:g} kappa_m)"
        )
    if np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ValueError("grid must be non-negative and strictly increasing")

    s_q = bath_force_psd(osc, units)
    inside = np.trapezoid(displacement_psd(grid, osc, units), grid)
    tails = s_q * (_chi_sq_mass(0.0, grid[0], osc) + _chi_sq_mass(grid[-1], np.inf, osc))
    return (inside + tails) / (2.0 * np.pi)
