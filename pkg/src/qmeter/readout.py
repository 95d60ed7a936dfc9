"""Detuned-cavity position meter.

The output amplitude quadrature, normalised to displacement, is

    y(w) = z(w) + chi(w) [F_BA(w) + F_q(w)]

with sensing noise ``z = c_z1 v1 + c_z2 v2`` and back-action force
``F_BA = c_F1 v1 + c_F2 v2`` driven by the input vacuum quadratures
``v1, v2``.  Each input quadrature has unit single-sided PSD, so for any
two outputs ``A = sum a_j v_j`` and ``B = sum b_j v_j`` the single-sided
symmetrised cross spectrum is ``S_AB = sum a_j conj(b_j)``.

Commutator convention: ``[v1(w), v2^dag(w')] = 2 pi i delta(w - w')``.
With it the z-F kernel is ``-i hbar`` at every frequency, the frequency
image of a commutator supported only on the past.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import Params, ValidationError
from .response import bath_force_psd, chi_freq


class DetuningNotSideband(ValidationError):
    pass


class ResolvedSidebandWarning(UserWarning):
    pass


def _pole_product(w, p: Params):
    k, d = p.cavity.kappa_r, p.cavity.detuning
    return (w - d + 0.5j * k) * (w + d + 0.5j * k)


@dataclass
class QuadratureTransfer:
    omega: np.ndarray
    c_z1: np.ndarray
    c_z2: np.ndarray
    c_f1: np.ndarray
    c_f2: np.ndarray
    x_gain: float = 1.0


def transfer(omega, p: Params) -> QuadratureTransfer:
    w = np.asarray(omega, dtype=float)
    k, d, g = p.cavity.kappa_r, p.cavity.detuning, p.cavity.g0_bar
    norm = np.sqrt(2.0 * k) * g * d
    c_z1 = (d * d - k * k / 4.0 - w * w) / norm
    c_z2 = np.full_like(w, -k * d / norm)
    pp = _pole_product(w, p)
    pref = 2.0 * p.hbar * g * np.sqrt(k / 2.0)
    c_f1 = pref * (k / 2.0 - 1j * w) / pp
    c_f2 = pref * d / pp
    return QuadratureTransfer(w, c_z1, c_z2, c_f1, c_f2)


def s_zz(omega, p: Params):
    """Sensing-noise PSD."""
    w = np.asarray(omega, dtype=float)
    k, d, g = p.cavity.kappa_r, p.cavity.detuning, p.cavity.g0_bar
    a = d * d - k * k / 4.0 - w * w
    return (a * a + k * k * d * d) / (2.0 * k * g * g * d * d)


def s_zf(omega, p: Params):
    """Sensing/back-action cross spectrum ``hbar (k_r/2 - i w) / Delta``.

    The only term odd in the detuning.
    """
    w = np.asarray(omega, dtype=float)
    return p.hbar * (p.cavity.kappa_r / 2.0 - 1j * w) / p.cavity.detuning


def s_ff_ba(omega, p: Params):
    """Back-action (radiation-pressure) force PSD."""
    w = np.asarray(omega, dtype=float)
    k, d, g = p.cavity.kappa_r, p.cavity.detuning, p.cavity.g0_bar
    a = d * d - k * k / 4.0 - w * w
    num = 2.0 * p.hbar**2 * g * g * k * (k * k / 4.0 + w * w + d * d)
    return num / (a * a + k * k * d * d)


def heisenberg_product(omega, p: Params):
    """``S_zz S_FF^BA - |S_zF|^2``.

    Evaluated as the Gram determinant ``|c_z1 c_F2 - c_z2 c_F1|^2`` of the
    transfer matrix, which equals the spectral combination identically but
    avoids the cancellation between two large products when ``w >> Delta``.
    """
    t = transfer(omega, p)
    return np.abs(t.c_z1 * t.c_f2 - t.c_z2 * t.c_f1) ** 2


@dataclass
class NoiseBudget:
    omega: np.ndarray
    s_zz: np.ndarray
    corr_term: np.ndarray
    s_ba: np.ndarray
    s_thermal_zp: np.ndarray
    s_yy_total: np.ndarray

    COLUMNS = ("omega", "s_zz", "corr_term", "s_ba", "s_thermal_zp", "s_yy_total")

    def rows(self):
        cols = [np.broadcast_to(getattr(self, c), self.omega.shape) for c in self.COLUMNS]
        return [dict(zip(self.COLUMNS, map(float, vals))) for vals in zip(*cols)]


def s_yy(omega, p: Params) -> NoiseBudget:
    """Full displacement-normalised output spectrum with its breakdown."""
    w = np.asarray(omega, dtype=float)
    chi = chi_freq(w, p.osc)
    chi2 = np.abs(chi) ** 2
    zz = s_zz(w, p)
    corr = 2.0 * np.real(np.conj(chi) * s_zf(w, p))
    ba = chi2 * s_ff_ba(w, p)
    zp = chi2 * bath_force_psd(p.osc, p.units)
    return NoiseBudget(w, zz, corr, ba, zp, zz + corr + ba + zp)


def _sideband_sign(p: Params) -> int:
    d, wm = p.cavity.detuning, p.osc.omega_m
    if abs(abs(d) - wm) > 1e-9 * wm:
        raise DetuningNotSideband(f"|detuning|={abs(d)} must equal omega_m={wm}")
    return 1 if d > 0 else -1


def s_yy_resolved_sideband(omega, p: Params):
    """Floor plus Lorentzian valid for ``|Delta| = w_m``, ``k_r << w_m``
    and negligible back-action.  Weight ``2n + 1 - 1`` for ``Delta = +w_m``,
    ``2n + 1 + 1`` for ``Delta = -w_m``."""
    sign = _sideband_sign(p)
    o, k = p.osc, p.cavity.kappa_r
    if k >= o.omega_m / 5.0:
        warnings.warn(
            f"kappa_r={k} is not well inside the resolved-sideband regime",
            ResolvedSidebandWarning,
            stacklevel=2,
        )
    w = np.asarray(omega, dtype=float)
    floor = k / (2.0 * p.cavity.g0_bar**2)
    weight = 2.0 * o.n_occ + 1.0 - sign
    lor = (w - o.omega_m) ** 2 + (o.kappa_m / 2.0) ** 2
    return floor + p.hbar * o.kappa_m * weight / (2.0 * o.mass * o.omega_m * lor)


def shot_noise_floor(p: Params) -> float:
    return p.cavity.kappa_r / (2.0 * p.cavity.g0_bar**2)


@dataclass
class CommutatorKernels:
    omega: np.ndarray
    k_zz: np.ndarray
    k_zf: np.ndarray


def commutator_kernels(omega, p: Params) -> CommutatorKernels:
    t = transfer(omega, p)
    k_zz = 1j * (t.c_z1 * np.conj(t.c_z2) - t.c_z2 * np.conj(t.c_z1))
    k_zf = 1j * (t.c_z1 * np.conj(t.c_f2) - t.c_z2 * np.conj(t.c_f1))
    return CommutatorKernels(t.omega, k_zz, k_zf)


def output_gain(omega, p: Params):
    """``|S_Y1 / S_yy|``: converts displacement-normalised spectra to raw
    output-quadrature units, ``2 k_r G0^2 Delta^2 / |P(w)|^2``."""
    w = np.asarray(omega, dtype=float)
    k, d, g = p.cavity.kappa_r, p.cavity.detuning, p.cavity.g0_bar
    return 2.0 * k * g * g * d * d / np.abs(_pole_product(w, p)) ** 2


def output_quadrature_psd(omega, p: Params, bath: bool = True):
    """Single-sided PSD of the output amplitude quadrature ``Y1``.

    Written so that it stays finite at ``g0_bar = 0`` (pure vacuum, PSD 1):
    the sensing part maps to exactly 1 in these units.
    """
    w = np.asarray(omega, dtype=float)
    k, d, g = p.cavity.kappa_r, p.cavity.detuning, p.cavity.g0_bar
    pp2 = np.abs(_pole_product(w, p)) ** 2
    chi = chi_freq(w, p.osc)
    s_force = s_ff_ba(w, p) + (bath_force_psd(p.osc, p.units) if bath else 0.0)
    signal = 2.0 * np.real(np.conj(chi) * s_zf(w, p)) + np.abs(chi) ** 2 * s_force
    return 1.0 + 2.0 * k * g * g * d * d * signal / pp2
