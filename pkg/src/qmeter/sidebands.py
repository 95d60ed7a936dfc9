"""Sideband asymmetry and the scattering (Raman) picture.

Positive detuning (laser below the cavity) enhances the anti-Stokes
sideband, whose area scales as ``n``; negative detuning enhances the
Stokes sideband, scaling as ``n + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .model import CavityParams, Params, SpectrumGrid, ValidationError
from .readout import _sideband_sign, s_zf, shot_noise_floor
from .response import chi_freq


class WindowExceedsGrid(ValidationError):
    pass


class NegativeArea(ValueError):
    pass


class ZeroDenominator(ZeroDivisionError):
    pass


# ---------------------------------------------------------------- scattering

def density_of_states(omega, cavity: CavityParams):
    """Cavity photon density of states, a Lorentzian of peak ``2/k_r`` at
    ``w = Delta``."""
    w = np.asarray(omega, dtype=float)
    hk = cavity.kappa_r / 2.0
    return hk / ((w - cavity.detuning) ** 2 + hk * hk)


def _mech_lorentzian(w, p: Params):
    return (w - p.osc.omega_m) ** 2 + (p.osc.kappa_m / 2.0) ** 2


def gamma_anti_stokes(omega, p: Params):
    w = np.asarray(omega, dtype=float)
    g2 = p.derived().g0_bar_rate ** 2
    return g2 * p.osc.kappa_m * p.osc.n_occ * density_of_states(w, p.cavity) / _mech_lorentzian(w, p)


def gamma_stokes(omega, p: Params):
    # Stokes photons sit at w_laser - w, hence D(-w)
    w = np.asarray(omega, dtype=float)
    g2 = p.derived().g0_bar_rate ** 2
    return g2 * p.osc.kappa_m * (p.osc.n_occ + 1.0) * density_of_states(-w, p.cavity) / _mech_lorentzian(w, p)


@dataclass
class ScatteringRates:
    omega: np.ndarray
    gamma_as: np.ndarray
    gamma_s: np.ndarray
    dos: np.ndarray

    COLUMNS = ("omega", "gamma_as", "gamma_s", "dos")


def scattering_rates(omega, p: Params) -> ScatteringRates:
    w = np.asarray(omega, dtype=float)
    return ScatteringRates(w, gamma_anti_stokes(w, p), gamma_stokes(w, p), density_of_states(w, p.cavity))


def syy_from_scattering(omega, p: Params):
    """Heterodyne spectrum as shot-noise floor times ``1 + 2 Gamma``:
    anti-Stokes rate for ``Delta = +w_m``, Stokes rate for ``Delta = -w_m``."""
    sign = _sideband_sign(p)
    rate = gamma_anti_stokes(omega, p) if sign > 0 else gamma_stokes(omega, p)
    return shot_noise_floor(p) * (1.0 + 2.0 * rate)


# ------------------------------------------------------------ area pipeline

@dataclass
class SidebandArea:
    area: float          # floor-subtracted area including the tail correction
    inside: float        # trapezoid area within the window
    floor: float         # representative floor value (median / centre value)
    window: tuple[float, float]
    covered_fraction: float


@dataclass
class SidebandAreas:
    i_plus: float
    i_minus: float
    floor_plus: float
    floor_minus: float
    window: tuple[float, float]
    eta: float

    @property
    def n_est(self) -> float:
        return 0.0 if math.isinf(self.eta) else 1.0 / self.eta


def _floor_values(w, s, centre, kappa_m, floor, floor_band):
    if floor is None or isinstance(floor, str):
        method = floor or "median"
        lo, hi = floor_band
        d = w - centre
        mask = (np.abs(d) >= lo * kappa_m) & (np.abs(d) <= hi * kappa_m)
        right = (d >= lo * kappa_m) & (d <= hi * kappa_m)
        left = (d <= -lo * kappa_m) & (d >= -hi * kappa_m)
        if not right.any() and not left.any():
            raise WindowExceedsGrid(
                f"no samples in the floor bands {lo:g}..{hi:g} kappa_m from omega_m"
            )
        if method == "median":
            return np.full_like(w, np.median(s[mask]))
        if method == "poly":
            # sensing noise is a quartic in w; fit in a scaled variable
            scale = hi * kappa_m
            coef = np.polynomial.polynomial.polyfit(d[mask] / scale, s[mask], 4)
            return np.polynomial.polynomial.polyval(d / scale, coef)
        raise ValueError(f"unknown floor method {method!r}")
    return np.broadcast_to(np.asarray(floor, dtype=float), w.shape).astype(float)


def sideband_area(
    spectrum: SpectrumGrid,
    p: Params,
    window_halfwidth: float = 50.0,
    *,
    floor=None,
    floor_band: tuple[float, float] = (100.0, 200.0),
    tail_correction: bool = True,
    tolerance: float | None = None,
) -> SidebandArea:
    """Area of the mechanical sideband above the noise floor.

    Parameters
    ----------
    spectrum
        Spectrum sampled on an increasing frequency grid.
    window_halfwidth
        Integration half-width in units of ``kappa_m``.
    floor
        ``None``/``"median"``: median of the samples between
        ``floor_band`` (in ``kappa_m``) on either side of ``omega_m``.
        ``"poly"``: quartic fit over the same bands, for spectra whose
        sensing floor is not flat.  A scalar or array is subtracted as is.
    tail_correction
        Divide by the fraction of a Lorentzian of width ``kappa_m`` that
        lies inside the window actually covered by the grid.
    tolerance
        Areas below ``-tolerance`` raise :class:`NegativeArea`.  Defaults
        to ``1e-9`` of the floor integrated over the window.
    """
    w, s = spectrum.omega, np.asarray(spectrum.values, dtype=float)
    wm, km = p.osc.omega_m, p.osc.kappa_m
    half = window_halfwidth * km
    if w[0] > wm - half or w[-1] < wm + half:
        raise WindowExceedsGrid(
            f"grid [{w[0]}, {w[-1]}] does not cover omega_m +- {window_halfwidth:g} kappa_m"
        )
    floor_vals = _floor_values(w, s, wm, km, floor, floor_band)

    inw = np.abs(w - wm) <= half * (1 + 1e-12)
    ww = w[inw]
    inside = float(np.trapezoid(s[inw] - floor_vals[inw], ww))

    g = km / 2.0
    frac = (math.atan((ww[-1] - wm) / g) + math.atan((wm - ww[0]) / g)) / math.pi
    area = inside / frac if tail_correction else inside

    floor_ref = float(np.interp(wm, w, floor_vals))
    if tolerance is None:
        tolerance = 1e-9 * abs(floor_ref) * (ww[-1] - ww[0])
    if area < -tolerance:
        raise NegativeArea(f"floor-subtracted area {area:g} is below -{tolerance:g}")
    return SidebandArea(area, inside, floor_ref, (float(ww[0]), float(ww[-1])), frac)


def asymmetry_factor(i_plus: float, i_minus: float, *, strict: bool = False) -> float:
    """``I_- / I_+ - 1``; ``inf`` when ``I_+ <= 0`` unless ``strict``."""
    if i_plus <= 0:
        if strict:
            raise ZeroDenominator("anti-Stokes area is zero")
        return math.inf
    return i_minus / i_plus - 1.0


def eta_from_occupation(n: float, *, strict: bool = False) -> float:
    if n <= 0:
        if strict:
            raise ZeroDenominator("occupation is zero")
        return math.inf
    return 1.0 / n


def sideband_asymmetry(
    spectrum_plus: SpectrumGrid,
    spectrum_minus: SpectrumGrid,
    p: Params,
    window_halfwidth: float = 50.0,
    **kw,
) -> SidebandAreas:
    """Areas and asymmetry from the two detuning cases."""
    a_p = sideband_area(spectrum_plus, p, window_halfwidth, **kw)
    a_m = sideband_area(spectrum_minus, p, window_halfwidth, **kw)
    # a residual at rounding level is "no sideband"
    i_plus = a_p.area if a_p.area > 1e-12 * max(abs(a_m.area), 1e-300) else 0.0
    return SidebandAreas(
        i_plus, a_m.area, a_p.floor, a_m.floor, a_p.window, asymmetry_factor(i_plus, a_m.area)
    )


# ------------------------------------------- correlation vs zero-point check

def _integrate_positive(f, p: Params) -> float:
    wm, km = p.osc.omega_m, p.osc.kappa_m
    lo, hi = max(wm - 50 * km, 0.0), wm + 50 * km
    opts = dict(limit=500, epsabs=0.0, epsrel=1e-11)
    parts = [
        integrate.quad(f, 0.0, lo, **opts)[0] if lo > 0 else 0.0,
        integrate.quad(f, lo, hi, points=[wm], **opts)[0],
        integrate.quad(f, hi, np.inf, **opts)[0],
    ]
    return math.fsum(parts)


def correlation_integral(p: Params, szf_sign: float = 1.0) -> float:
    """``int_0^inf 2 Re[conj(chi) S_zF] dw``.  ``szf_sign`` flips the cross
    spectrum for canary runs."""

    def f(w):
        return 2.0 * np.real(np.conj(chi_freq(w, p.osc)) * szf_sign * s_zf(w, p))

    return _integrate_positive(f, p)


def zero_point_integral(p: Params) -> float:
    """``int_0^inf |chi|^2 S_FF^q dw`` at zero occupancy."""
    s_q = 2.0 * p.hbar * p.osc.mass * p.osc.kappa_m * p.osc.omega_m

    def f(w):
        return np.abs(chi_freq(w, p.osc)) ** 2 * s_q

    return _integrate_positive(f, p)
