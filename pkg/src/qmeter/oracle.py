"""Time-domain oracle for the analytic output spectrum.

The linearised Langevin equations are integrated with their exact
discrete propagator (matrix exponential of the drift, Van Loan noise
covariance), driven by white noise whose symmetrised spectra match the
quantum input spectra.  Because everything is linear and Gaussian, the
classical simulation's PSD equals the symmetrised quantum PSD.  Nothing
here uses a frequency-domain formula.

Noise intensities (two-sided, ``<xi(t) xi(t')> = D delta(t - t')``):
``D = 1/2`` for each input quadrature ``v1, v2`` (unit single-sided
PSD) and ``D = S_FF^q / 2`` for the bath force.

Output samples are averages of ``Y1`` over each step, so the white
vacuum part maps exactly onto a flat discrete PSD of 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg, signal

from .model import Params, SpectrumGrid
from .readout import output_quadrature_psd
from .response import bath_force_psd
from .tables import columns_to_rows, write_csv


class UnstableConfig(ValueError):
    pass


class NonFiniteState(RuntimeError):
    pass


class TooShort(ValueError):
    pass


class BandMismatch(ValueError):
    pass


class ShortRunWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Simulation and estimator settings.

    ``dynamical_backaction=False`` drops the O(G0^2) feedback of the
    displacement-driven cavity field onto the oscillator, which is the
    approximation the analytic spectra make.  ``True`` integrates the full
    coupled equations.
    """

    dt: float
    duration: float
    seed: int = 0
    welch_segment_length: int = 65536
    welch_overlap: float = 0.5
    transient_skip: float = 0.0
    dynamical_backaction: bool = False
    bath_noise: bool = True

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.dt))


def max_stable_dt(p: Params) -> float:
    rates = (p.osc.omega_m, abs(p.cavity.detuning), p.cavity.kappa_r, p.osc.kappa_m)
    return 2.0 * math.pi / (40.0 * max(rates))


def default_sim_config(p: Params, **overrides) -> SimConfig:
    """dt of 1/64 mechanical period (capped by the stability limit),
    duration of 200 decay periods (at least 2^20 samples), and Welch
    segments resolving kappa_m/10.  Without coupling there is no line to
    resolve, so short segments (many averages) are used instead."""
    dt = min(2.0 * math.pi / (64.0 * p.osc.omega_m), max_stable_dt(p))
    duration = max(200.0 * 2.0 * math.pi / p.osc.kappa_m, 2**20 * dt)
    if p.cavity.g0_bar == 0:
        seg = 256
    else:
        seg = 2 ** math.ceil(math.log2(2.0 * math.pi / (dt * p.osc.kappa_m / 10.0)))
    cfg = dict(dt=dt, duration=duration, welch_segment_length=seg)
    cfg.update(overrides)
    return SimConfig(**cfg)


def check_config(p: Params, cfg: SimConfig) -> None:
    if not (cfg.dt > 0 and cfg.duration > 0):
        raise UnstableConfig("dt and duration must be positive")
    if cfg.dt > max_stable_dt(p) * (1 + 1e-12):
        raise UnstableConfig(f"dt={cfg.dt} exceeds {max_stable_dt(p)} (40 steps per fastest period)")
    if not 0.0 <= cfg.welch_overlap < 1.0:
        raise ValueError("welch_overlap must be in [0, 1)")
    if cfg.duration < 200.0 * 2.0 * math.pi / p.osc.kappa_m:
        warnings.warn("duration is below 200 mechanical decay periods", ShortRunWarning, stacklevel=3)


# ------------------------------------------------------------------ model

def _state_space(p: Params, cfg: SimConfig):
    """Drift matrix of [state..., U] and per-source (column, intensity).

    ``U`` integrates ``Y1`` over a step; it feeds nothing back.
    State: x, p, then the cavity field (real, imag).  Without dynamical
    back-action the field splits into a vacuum-driven part ``n`` (which
    exerts the back-action force) and a displacement-driven part ``s``.
    """
    m, wm, km = p.osc.mass, p.osc.omega_m, p.osc.kappa_m
    k, d, g, hbar = p.cavity.kappa_r, p.cavity.detuning, p.cavity.g0_bar, p.hbar
    cav = np.array([[-k / 2, d], [-d, -k / 2]])

    if cfg.dynamical_backaction:
        n = 4
        idx_force, idx_out, idx_x_drive = [2], [2], 3
        blocks = [(2, cav)]
    else:
        n = 6
        idx_force, idx_out, idx_x_drive = [2], [2, 4], 5
        blocks = [(2, cav), (4, cav)]

    M = np.zeros((n + 1, n + 1))
    M[0, 1] = 1.0 / m
    M[1, 0] = -m * wm**2
    M[1, 1] = -km
    for i in idx_force:
        M[1, i] = -2.0 * hbar * g
    for i0, blk in blocks:
        M[i0:i0 + 2, i0:i0 + 2] = blk
    M[idx_x_drive, 0] = -g
    for i in idx_out:
        M[n, i] = math.sqrt(2.0 * k)

    sources = []
    col = np.zeros(n + 1); col[2] = math.sqrt(k / 2); col[n] = -1.0
    sources.append((col, 0.5))                                   # v1
    col = np.zeros(n + 1); col[3] = math.sqrt(k / 2)
    sources.append((col, 0.5))                                   # v2
    if cfg.bath_noise:
        col = np.zeros(n + 1); col[1] = 1.0
        sources.append((col, bath_force_psd(p.osc, p.units) / 2))  # F_q
    return M, sources, n


def _van_loan(M, col, intensity, dt):
    n = M.shape[0]
    C = np.zeros((2 * n, 2 * n))
    C[:n, :n] = -M
    C[:n, n:] = intensity * np.outer(col, col)
    C[n:, n:] = M.T
    E = linalg.expm(C * dt)
    phi = E[n:, n:].T
    Q = phi @ E[:n, n:]
    return phi, 0.5 * (Q + Q.T)


def _sqrt_psd(Q):
    vals, vecs = linalg.eigh(Q)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


@dataclass
class Propagator:
    phi: np.ndarray        # n x n state transition
    gamma: np.ndarray      # row mapping X_k to the step integral of Y1
    noise_roots: list      # per-source (n+1) x (n+1) square roots
    n: int

    @property
    def noise_cov(self):
        return sum(L @ L.T for L in self.noise_roots)


def discretize(p: Params, cfg: SimConfig) -> Propagator:
    M, sources, n = _state_space(p, cfg)
    roots = []
    phi_aug = linalg.expm(M * cfg.dt)
    for col, q in sources:
        _, Q = _van_loan(M, col, q, cfg.dt)
        roots.append(_sqrt_psd(Q))
    return Propagator(phi_aug[:n, :n], phi_aug[n, :n], roots, n)


# ------------------------------------------------------------- simulation

@dataclass
class TimeSeries:
    t: np.ndarray
    y1: np.ndarray
    dt: float
    states: np.ndarray | None = None   # (N, n) if recorded

    @property
    def x(self):
        return None if self.states is None else self.states[:, 0]


class _SchurRecurrence:
    """Runs X_{k+1} = phi X_k + w_k in blocks via a complex Schur form.

    Each triangular component is a scalar AR(1) driven by its own noise
    plus already-computed lower components, so ``lfilter`` does the work.
    Stable for defective propagators (the split cavity has a repeated
    eigenvalue).
    """

    def __init__(self, phi, x0):
        self.T, self.Z = linalg.schur(phi.astype(complex), output="complex")
        self.z = self.Z.conj().T @ np.asarray(x0, dtype=complex)

    def run(self, w):
        """``w``: (N, n) noise block.  Returns states X_0..X_{N-1}."""
        T, n = self.T, self.T.shape[0]
        e = w @ self.Z.conj()          # rows of Z^H w_k
        z = np.empty_like(e)
        z_next = np.empty(n, dtype=complex)
        for i in range(n - 1, -1, -1):
            drive = e[:, i].copy()
            if i + 1 < n:
                drive += z[:, i + 1:] @ T[i, i + 1:]
            z[:, i], zf = signal.lfilter([0.0, 1.0], [1.0, -T[i, i]], drive, zi=[self.z[i]])
            z_next[i] = zf[0]
        self.z = z_next
        return np.real(z @ self.Z.T)


def simulate(
    p: Params,
    cfg: SimConfig,
    *,
    initial_state=None,
    noise: bool = True,
    record_states: bool = False,
    chunk: int = 2**16,
) -> TimeSeries:
    """Sample the output amplitude quadrature ``Y1``.

    Deterministic for a given ``cfg.seed``: independent generator streams
    for ``v1``, ``v2``, the bath force and the initial state are spawned
    from it.  The initial state is drawn from the stationary distribution
    unless ``initial_state`` is given.  ``noise=False`` switches off all
    driving noise (ring-down checks).
    """
    check_config(p, cfg)
    prop = discretize(p, cfg)
    n, N = prop.n, cfg.n_samples
    streams = [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(cfg.seed).spawn(4)]
    rng_init = streams[3]

    if initial_state is None:
        Qxx = prop.noise_cov[:n, :n]
        P0 = linalg.solve_discrete_lyapunov(prop.phi, Qxx) if noise else np.zeros((n, n))
        x0 = _sqrt_psd(0.5 * (P0 + P0.T)) @ rng_init.standard_normal(n)
    else:
        x0 = np.zeros(n)
        x0[: len(initial_state)] = initial_state

    rec = _SchurRecurrence(prop.phi, x0)
    y = np.empty(N)
    states = np.empty((N, n)) if record_states else None
    for start in range(0, N, chunk):
        m = min(chunk, N - start)
        w = np.zeros((m, n + 1))
        if noise:
            for L, rng in zip(prop.noise_roots, streams):
                w += rng.standard_normal((m, n + 1)) @ L.T
        X = rec.run(w[:, :n])
        y[start:start + m] = (X @ prop.gamma + w[:, n]) / cfg.dt
        if record_states:
            states[start:start + m] = X
    if not np.all(np.isfinite(y)):
        raise NonFiniteState("non-finite output; propagator or noise is broken")
    return TimeSeries(np.arange(N) * cfg.dt, y, cfg.dt, states)


# --------------------------------------------------------------- estimator

@dataclass
class PsdEstimate:
    omega: np.ndarray        # rad/s
    psd: np.ndarray          # single-sided, int psd dw/2pi = variance
    stderr: np.ndarray
    n_segments: int
    effective_segments: float

    def variance(self) -> float:
        dw = self.omega[1] - self.omega[0]
        return float(np.sum(self.psd) * dw / (2.0 * np.pi))


def _segment_correlation(window, step, n_segments):
    """Welch's variance inflation for overlapping windowed segments."""
    L = len(window)
    w2 = np.sum(window**2)
    total = 1.0
    for j in range(1, n_segments):
        shift = j * step
        if shift >= L:
            break
        rho = np.sum(window[: L - shift] * window[shift:]) / w2
        total += 2.0 * (1.0 - j / n_segments) * rho**2
    return n_segments / total


def welch_psd(
    data,
    dt: float | None = None,
    segment_length: int = 65536,
    overlap: float = 0.5,
    window: str = "hann",
    skip: float = 0.0,
) -> PsdEstimate:
    """Averaged modified periodogram with single-sided normalisation.

    Each bin ``k`` of a length-``L`` segment sits at ``w_k = 2 pi k/(L dt)``
    and ``sum(psd) dw / 2pi`` reproduces the sample mean square.  The
    standard error is ``psd / sqrt(K_eff)`` with ``K_eff`` the segment
    count corrected for overlap correlation.
    """
    if isinstance(data, TimeSeries):
        dt = data.dt if dt is None else dt
        data = data.y1
    x = np.asarray(data, dtype=float)
    if skip:
        x = x[int(round(skip / dt)):]
    L = int(segment_length)
    step = max(1, int(round(L * (1.0 - overlap))))
    if len(x) < L:
        raise TooShort(f"{len(x)} samples is shorter than one segment ({L})")
    K = 1 + (len(x) - L) // step
    if K < 4:
        raise TooShort(f"only {K} segments; need at least 4")

    win = signal.get_window(window, L)
    scale = 2.0 * dt / np.sum(win**2)
    acc = np.zeros(L // 2 + 1)
    for i in range(K):
        seg = x[i * step: i * step + L]
        acc += np.abs(np.fft.rfft(seg * win)) ** 2
    psd = acc * scale / K
    psd[0] /= 2.0
    if L % 2 == 0:
        psd[-1] /= 2.0
    omega = 2.0 * np.pi * np.fft.rfftfreq(L, dt)
    k_eff = _segment_correlation(win, step, K)
    return PsdEstimate(omega, psd, psd / np.sqrt(k_eff), K, k_eff)


# -------------------------------------------------------------- comparison

def sampled_output_psd(omega, p: Params, dt: float, bath: bool = True):
    """Analytic ``Y1`` PSD as seen through step-averaged sampling: the
    non-vacuum part picks up the boxcar response ``sinc^2(w dt / 2)``."""
    w = np.asarray(omega, dtype=float)
    return 1.0 + (output_quadrature_psd(w, p, bath=bath) - 1.0) * np.sinc(w * dt / (2 * np.pi)) ** 2


@dataclass
class ComparisonReport:
    omega: np.ndarray
    residual: np.ndarray        # (estimate - analytic) / stderr
    fraction_within: float      # share of bins with |residual| <= n_sigma
    rms_relative: float
    n_bins: int
    n_sigma: float = 3.0

    def worst(self):
        i = int(np.argmax(np.abs(self.residual)))
        return float(self.omega[i]), float(self.residual[i])


def compare(analytic: SpectrumGrid, estimate: PsdEstimate, band, n_sigma: float = 3.0) -> ComparisonReport:
    lo, hi = band
    if not lo < hi:
        raise BandMismatch("band must satisfy lo < hi")
    mask = (estimate.omega >= lo) & (estimate.omega <= hi)
    if not mask.any():
        raise BandMismatch(f"no estimator bins in [{lo}, {hi}]")
    if analytic.omega[0] > estimate.omega[mask][0] or analytic.omega[-1] < estimate.omega[mask][-1]:
        raise BandMismatch("analytic spectrum does not cover the band")
    w = estimate.omega[mask]
    if analytic.omega.shape == estimate.omega.shape and np.array_equal(analytic.omega, estimate.omega):
        ref = np.asarray(analytic.values)[mask]
    else:
        ref = np.interp(w, analytic.omega, analytic.values)
    est = estimate.psd[mask]
    # standard error expected if the analytic spectrum is right; the
    # estimate's own error bar is skewed low where the estimate is low
    rel_err = 1.0 / np.sqrt(estimate.effective_segments)
    resid = (est - ref) / (ref * rel_err)
    rms = float(np.sqrt(np.mean(((est - ref) / ref) ** 2)))
    within = float(np.mean(np.abs(resid) <= n_sigma))
    return ComparisonReport(w, resid, within, rms, int(mask.sum()), n_sigma)


def default_band(p: Params, estimate: PsdEstimate):
    """Everything from the first non-DC bin to 3/4 of Nyquist."""
    return estimate.omega[1], 0.75 * estimate.omega[-1]


def run_oracle(p: Params, cfg: SimConfig, band=None, analytic_params: Params | None = None):
    """Simulate, estimate and compare against the analytic spectrum.

    ``analytic_params`` lets a caller compare against deliberately wrong
    parameters (sign-flip canary).
    """
    series = simulate(p, cfg)
    est = welch_psd(series, segment_length=cfg.welch_segment_length, overlap=cfg.welch_overlap, skip=cfg.transient_skip)
    ap = analytic_params or p
    ana = SpectrumGrid(est.omega, sampled_output_psd(est.omega, ap, cfg.dt, bath=cfg.bath_noise))
    band = band or default_band(p, est)
    return compare(ana, est, band), est, ana


# ------------------------------------------------------------------ output

def psd_rows(est: PsdEstimate) -> list[dict]:
    return columns_to_rows({"omega": est.omega, "psd": est.psd, "stderr": est.stderr})


def series_rows(series: TimeSeries) -> list[dict]:
    return columns_to_rows({"t": series.t, "Y1": series.y1})


def write_psd_csv(est: PsdEstimate, path) -> None:
    with open(path, "w", newline="") as fh:
        write_csv(psd_rows(est), fh)


def write_series_csv(series: TimeSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        write_csv(series_rows(series), fh)
