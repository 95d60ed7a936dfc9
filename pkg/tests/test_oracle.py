import io
import math

import numpy as np
import pytest
from scipy import integrate, linalg, signal

from qmeter import oracle as O
from qmeter.model import Params, SpectrumGrid
from qmeter.readout import output_gain
from qmeter.sidebands import gamma_stokes, sideband_asymmetry
from qmeter.tables import read_csv


def weak(**kw):
    base = dict(g0_bar_coupling=0.005)
    base.update(kw)
    return Params().replace(**base)


# ------------------------------------------------------------ configuration

def test_unstable_dt(defaults):
    cfg = O.default_sim_config(defaults, dt=2 * math.pi / 30)
    with pytest.raises(O.UnstableConfig):
        O.simulate(defaults, cfg)


def test_bad_overlap(defaults):
    with pytest.raises(ValueError):
        O.check_config(defaults, O.default_sim_config(defaults, welch_overlap=1.0))


def test_short_run_warns(defaults):
    with pytest.warns(O.ShortRunWarning):
        O.check_config(defaults, O.default_sim_config(defaults, duration=100.0))


def test_default_config(defaults):
    cfg = O.default_sim_config(defaults)
    assert cfg.dt == pytest.approx(2 * math.pi / 64)
    assert cfg.n_samples >= 2**20
    assert 2 * math.pi / (cfg.welch_segment_length * cfg.dt) <= defaults.osc.kappa_m / 10


# ------------------------------------------------------------- propagator

def test_van_loan_covariance_against_quadrature(defaults):
    """Q = int_0^dt e^{Ms} G D G^T e^{M^T s} ds by adaptive quadrature."""
    cfg = O.default_sim_config(defaults)
    M, sources, n = O._state_space(defaults, cfg)
    prop = O.discretize(defaults, cfg)
    total = np.zeros((n + 1, n + 1))
    for col, q in sources:
        f = lambda s: (lambda E: q * E @ np.outer(col, col) @ E.T)(linalg.expm(M * s))
        total += integrate.quad_vec(f, 0.0, cfg.dt, epsabs=1e-14, epsrel=1e-12)[0]
    assert np.allclose(prop.noise_cov, total, rtol=1e-8, atol=1e-14)


def test_schur_recurrence_matches_loop(defaults, rng):
    prop = O.discretize(defaults, O.default_sim_config(defaults))
    w = rng.standard_normal((700, prop.n))
    x0 = rng.standard_normal(prop.n)
    rec = O._SchurRecurrence(prop.phi, x0)
    got = np.vstack([rec.run(w[:250]), rec.run(w[250:251]), rec.run(w[251:])])
    ref = np.empty_like(got)
    s = x0.copy()
    for k in range(len(w)):
        ref[k] = s
        s = prop.phi @ s + w[k]
    assert np.max(np.abs(got - ref)) <= 1e-11 * np.max(np.abs(ref))


def test_ringdown_bare_oscillator():
    p = weak(kappa_m=0.01)
    cfg = O.SimConfig(dt=2 * math.pi / 64, duration=20 * math.pi)
    for x0, p0 in [(1.0, 0.0), (0.0, 1.0)]:
        ts = O.simulate(p, cfg, initial_state=[x0, p0], noise=False, record_states=True)
        k, wm = p.osc.kappa_m, p.osc.omega_m
        w1 = math.sqrt(wm**2 - k**2 / 4)
        env = np.exp(-k * ts.t / 2)
        exact = env * (x0 * (np.cos(w1 * ts.t) + k / (2 * w1) * np.sin(w1 * ts.t)) + p0 * np.sin(w1 * ts.t) / w1)
        assert np.max(np.abs(ts.x - exact) / env) <= 1e-8


def _coupled_rhs(p):
    m, wm, km = p.osc.mass, p.osc.omega_m, p.osc.kappa_m
    k, d, g, hbar = p.cavity.kappa_r, p.cavity.detuning, p.cavity.g0_bar, p.hbar

    def rhs(t, y):
        x, mom, ar, ai = y
        return [
            mom / m,
            -m * wm**2 * x - km * mom - 2 * hbar * g * ar,
            -k / 2 * ar + d * ai,
            -d * ar - k / 2 * ai - g * x,
        ]
    return rhs


@pytest.mark.parametrize("detuning", [1.0, -1.0])
def test_ringdown_with_dynamical_backaction(detuning):
    """Fully coupled free evolution against an adaptive ODE integration."""
    p = Params().replace(g0_bar_coupling=0.03, detuning=detuning)
    cfg = O.SimConfig(dt=2 * math.pi / 64, duration=20 * math.pi, dynamical_backaction=True)
    for y0 in ([1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]):
        ts = O.simulate(p, cfg, initial_state=y0, noise=False, record_states=True)
        sol = integrate.solve_ivp(_coupled_rhs(p), (0.0, ts.t[-1]), y0, method="DOP853",
                                  t_eval=ts.t, rtol=1e-12, atol=1e-14)
        assert np.max(np.abs(ts.states[:, :4] - sol.y.T)) <= 1e-8


def test_stationary_variance_is_exact():
    for n in (0.0, 1.0):
        p = Params().replace(g0_bar_coupling=0.0, n_occ=n, allow_zero_coupling=True)
        prop = O.discretize(p, O.default_sim_config(p))
        P = linalg.solve_discrete_lyapunov(prop.phi, prop.noise_cov[: prop.n, : prop.n])
        assert P[0, 0] == pytest.approx((2 * n + 1) / 2, rel=1e-9)


def test_determinism():
    p = weak()
    cfg = O.default_sim_config(p, duration=2**16 * 2 * math.pi / 64, seed=7)
    a, b = O.simulate(p, cfg), O.simulate(p, cfg)
    assert np.array_equal(a.y1, b.y1)
    c = O.simulate(p, O.default_sim_config(p, duration=cfg.duration, seed=8))
    assert not np.array_equal(a.y1, c.y1)


def test_chunking_does_not_change_output():
    p = weak()
    cfg = O.default_sim_config(p, duration=5000 * 2 * math.pi / 64, seed=3)
    a = O.simulate(p, cfg, chunk=5000)
    b = O.simulate(p, cfg, chunk=777)
    assert np.allclose(a.y1, b.y1, rtol=0, atol=1e-10)


# --------------------------------------------------------------- estimator

def test_white_noise_psd_and_parseval(rng):
    dt = 0.1
    x = rng.standard_normal(2**20)
    est = O.welch_psd(x, dt, segment_length=1024)
    assert np.mean(est.psd[1:-1]) == pytest.approx(2 * dt, rel=1e-2)
    assert est.variance() == pytest.approx(np.mean(x**2), rel=1e-2)


def test_sinusoid_power():
    dt, L = 0.05, 4096
    k = 200
    w0 = 2 * np.pi * k / (L * dt)
    t = np.arange(L * 16) * dt
    est = O.welch_psd(3.0 * np.cos(w0 * t + 0.3), dt, segment_length=L)
    dw = est.omega[1] - est.omega[0]
    peak = np.sum(est.psd[k - 3 : k + 4]) * dw / (2 * np.pi)
    assert peak == pytest.approx(9.0 / 2, rel=1e-9)


def test_zero_input():
    est = O.welch_psd(np.zeros(4096), 0.1, segment_length=512)
    assert np.all(est.psd == 0)


def test_too_short():
    with pytest.raises(O.TooShort):
        O.welch_psd(np.ones(1000), 0.1, segment_length=512)


def test_matches_scipy_welch(rng):
    dt = 0.02
    x = signal.lfilter([1.0], [1.0, -0.9], rng.standard_normal(2**16))
    est = O.welch_psd(x, dt, segment_length=2048)
    f, ref = signal.welch(x, fs=1 / dt, window="hann", nperseg=2048, noverlap=1024, detrend=False)
    assert np.allclose(est.omega, 2 * np.pi * f)
    # per-Hz density equals per-(rad/s) density under the dw/2pi measure
    assert np.allclose(est.psd, ref, rtol=1e-10)


def test_effective_segments():
    win = signal.get_window("hann", 1024)
    k_eff = O._segment_correlation(win, 512, 100)
    assert 100 / 1.12 < k_eff < 100 / 1.05
    assert O._segment_correlation(win, 1024, 100) == pytest.approx(100)


# -------------------------------------------------------------- comparison

def test_band_mismatch(defaults):
    est = O.welch_psd(np.random.default_rng(0).standard_normal(8192), 0.1, segment_length=512)
    ana = SpectrumGrid(est.omega, np.full_like(est.omega, 0.2))
    with pytest.raises(O.BandMismatch):
        O.compare(ana, est, (5.0, 1.0))
    with pytest.raises(O.BandMismatch):
        O.compare(ana, est, (1e3, 2e3))
    with pytest.raises(O.BandMismatch):
        O.compare(SpectrumGrid(est.omega[:10], ana.values[:10]), est, (1.0, 20.0))


@pytest.mark.slow
@pytest.mark.parametrize("sign", [1.0, -1.0])
@pytest.mark.parametrize("n", [0.0, 1.0])
def test_equivalence_defaults(sign, n):
    p = Params().replace(detuning=sign, n_occ=n)
    rep, est, _ = O.run_oracle(p, O.default_sim_config(p))
    assert est.n_segments >= 4 and O.default_sim_config(p).n_samples >= 2**20
    assert rep.fraction_within >= 0.99


@pytest.mark.slow
def test_equivalence_full_coupling_weak_probe():
    p = weak(detuning=-1.0, n_occ=1.0)
    cfg = O.default_sim_config(p, dynamical_backaction=True)
    rep, _, _ = O.run_oracle(p, cfg)
    assert rep.fraction_within >= 0.99


@pytest.mark.slow
def test_vacuum_control():
    p = Params().replace(g0_bar_coupling=0.0, allow_zero_coupling=True)
    for bath in (True, False):
        rep, _, _ = O.run_oracle(p, O.default_sim_config(p, bath_noise=bath))
        assert rep.rms_relative <= 0.02
        assert rep.fraction_within >= 0.99


HANN_BIN_VARIANCE = 1 + 2 * (4 / 9) + 2 * (1 / 36)   # 50%-overlap Hann bin correlation


def _band_z(report, centre, halfwidth):
    near = np.abs(report.omega - centre) <= halfwidth
    return report.residual[near].mean() * math.sqrt(near.sum() / HANN_BIN_VARIANCE)


@pytest.mark.slow
def test_sign_flip_canary():
    """Comparing against the opposite detuning sign must be detected."""
    p = Params().replace(g0_bar_coupling=math.sqrt(0.01 * 0.1), detuning=1.0)   # n_ba = 1
    cfg = O.default_sim_config(p)
    good, _, _ = O.run_oracle(p, cfg)
    bad, _, _ = O.run_oracle(p, cfg, analytic_params=p.replace(detuning=-1.0))
    assert good.fraction_within >= 0.99
    assert abs(_band_z(good, 1.0, p.osc.kappa_m)) <= 3
    assert _band_z(bad, 1.0, p.osc.kappa_m) <= -5


@pytest.mark.slow
def test_scattering_picture_peak():
    """Weak probe, Delta = -w_m: S_yy(w_m) 2 G0^2 / k_r = 1 + 2 Gamma_S."""
    p = weak(detuning=-1.0, g0_bar_coupling=0.002)
    cfg = O.default_sim_config(p, seed=11)
    est = O.welch_psd(O.simulate(p, cfg), segment_length=cfg.welch_segment_length)
    sel = np.abs(est.omega - 1.0) <= p.osc.kappa_m / 4
    w = est.omega[sel]
    sinc2 = np.sinc(w * cfg.dt / (2 * np.pi)) ** 2
    syy = 1 + (est.psd[sel] - 1) / sinc2
    meas = np.mean(syy / output_gain(w, p) * 2 * p.cavity.g0_bar**2 / p.cavity.kappa_r)
    pred = np.mean(1 + 2 * gamma_stokes(w, p))
    sigma = pred / math.sqrt(est.effective_segments * sel.sum() / 1.944)
    # Hann bias at the peak (~1.3%) and back-action heating (~1%) are systematic
    assert abs(meas - pred) <= 3 * sigma + 0.03 * pred


def _area_sigma(est, ana, p, W):
    m = np.abs(est.omega - p.osc.omega_m) <= W * p.osc.kappa_m
    dw = est.omega[1] - est.omega[0]
    frac = 2 / np.pi * np.arctan(2 * W)
    s = ana.values[m] / np.sqrt(est.effective_segments)
    # Hann bins with 50% overlap: neighbour power correlations 4/9 and 1/36
    return dw * np.sqrt(np.sum(s**2) * (1 + 2 * (4 / 9 + 1 / 36))) / frac


def _oracle_asymmetry(km, kr, nba, W, duration, seed):
    g = math.sqrt(nba * km * kr)
    est, ana = {}, {}
    for sign in (1.0, -1.0):
        q = Params().replace(detuning=sign, n_occ=1.0, g0_bar_coupling=g, kappa_m=km, kappa_r=kr)
        cfg = O.default_sim_config(q, seed=seed, duration=duration)
        e = O.welch_psd(O.simulate(q, cfg), segment_length=cfg.welch_segment_length)
        est[sign] = (e, SpectrumGrid(e.omega, e.psd))
        ana[sign] = SpectrumGrid(e.omega, O.sampled_output_psd(e.omega, q, cfg.dt))
    r = sideband_asymmetry(est[1.0][1], est[-1.0][1], q, W, floor=1.0, tolerance=np.inf)
    model = sideband_asymmetry(ana[1.0], ana[-1.0], q, W, floor=1.0)
    sp = _area_sigma(est[1.0][0], ana[1.0], q, W)
    sm = _area_sigma(est[-1.0][0], ana[-1.0], q, W)
    ratio = model.i_minus / model.i_plus
    sigma = ratio * math.hypot(sp / model.i_plus, sm / model.i_minus)
    return r.eta, model.eta, sigma


@pytest.mark.slow
def test_oracle_asymmetry_consistent_with_model():
    eta, model_eta, sigma = _oracle_asymmetry(0.05, 0.1, 0.3, 5, 4e5, seed=0)
    assert abs(eta - model_eta) <= 3 * sigma
    # back-action heating biases eta to about 1/(n + n_ba)
    assert model_eta == pytest.approx(1 / 1.3, rel=0.05)


@pytest.mark.slow
def test_oracle_asymmetry_recovers_occupancy():
    """Stated property: oracle spectra give eta = 1/n within 10% at n = 1.

    Back-action heating must stay small (n_ba = 0.03 here), which leaves the
    sideband at ~0.24 of the vacuum floor; the record length needed for a
    statistically supported 10% is far beyond a test budget, so the error
    bar check fails."""
    eta, _, sigma = _oracle_asymmetry(0.05, 0.1, 0.03, 5, 1e6, seed=0)
    assert 3 * sigma <= 0.1
    assert abs(eta - 1.0) <= 0.1


# ------------------------------------------------------------------ output

def test_psd_csv_round_trip(tmp_path):
    est = O.welch_psd(np.random.default_rng(1).standard_normal(4096), 0.1, segment_length=256)
    path = tmp_path / "psd.csv"
    O.write_psd_csv(est, path)
    rows = read_csv(io.StringIO(path.read_text()))
    assert [r["psd"] for r in rows] == list(est.psd)
    assert path.read_text().splitlines()[0] == "omega,psd,stderr"


def test_series_csv(tmp_path):
    p = weak()
    ts = O.simulate(p, O.default_sim_config(p, duration=64 * 2 * math.pi / 64))
    path = tmp_path / "series.csv"
    O.write_series_csv(ts, path)
    rows = read_csv(io.StringIO(path.read_text()))
    assert [r["Y1"] for r in rows] == list(ts.y1)
