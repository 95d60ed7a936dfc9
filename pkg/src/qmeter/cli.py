"""Command-line front end.

    qmeter spectrum   [config] ...   noise budget for +Delta and -Delta
    qmeter asymmetry  [config] ...   sideband areas and eta over a list of n
    qmeter force      [config] ...   force-sensitivity budget over kappa_m values
    qmeter scattering [config] ...   Stokes / anti-Stokes rates
    qmeter oracle     [config] ...   time-domain check of the output spectrum
    qmeter check      [config] ...   closed-form invariant suite

Exit codes: 0 success, 1 configuration or validation error, 2 a check or
tolerance failed.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from dataclasses import fields

import numpy as np
import yaml

from . import force as force_mod
from . import oracle as oracle_mod
from . import readout, sidebands
from .model import CONFIG_KEYS, Params, SpectrumGrid, ValidationError, params_from_mapping
from .response import integrated_zero_point_variance
from .tables import columns_to_rows, write_csv, write_json

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2

GRID_KEYS = {"omega_min", "omega_max", "n_points", "spacing"}
SIM_KEYS = {f.name for f in fields(oracle_mod.SimConfig)}
OPTION_KEYS = {
    "window", "n_list", "kappa_m_list", "path", "floor", "band",
    "psd_output", "series_output", "n_sigma",
}


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config

def load_config(path) -> dict:
    """Read a JSON or YAML document (YAML is a superset of JSON)."""
    if path is None:
        return {}
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return data


def _check_block(block, allowed, prefix):
    if block is None:
        return {}
    if not isinstance(block, dict):
        raise ConfigError(f"'{prefix}' must be a mapping")
    for key in block:
        if key not in allowed:
            raise ConfigError(f"unknown config key '{prefix}.{key}'")
    return dict(block)


def split_config(data: dict):
    """Separate a config document into (params, grid, sim, options),
    rejecting unknown keys by their full path."""
    params, blocks = {}, {}
    for key, value in data.items():
        if key in CONFIG_KEYS:
            params[key] = value
        elif key in ("grid", "sim", "options"):
            blocks[key] = value
        else:
            raise ConfigError(f"unknown config key '{key}'")
    grid = _check_block(blocks.get("grid"), GRID_KEYS, "grid")
    sim = _check_block(blocks.get("sim"), SIM_KEYS, "sim")
    options = _check_block(blocks.get("options"), OPTION_KEYS, "options")
    return params, grid, sim, options


def make_grid(grid: dict, default):
    """Frequency grid from a ``grid`` block, falling back to ``default``
    (a callable returning an array) when the block is empty."""
    if not grid:
        return default()
    try:
        lo, hi = float(grid["omega_min"]), float(grid["omega_max"])
    except KeyError as exc:
        raise ConfigError(f"missing config key 'grid.{exc.args[0]}'") from None
    n = int(grid.get("n_points", 2001))
    spacing = grid.get("spacing", "linear")
    if n < 16:
        raise ConfigError("'grid.n_points' must be at least 16")
    if not lo < hi:
        raise ConfigError("'grid.omega_min' must be below 'grid.omega_max'")
    if spacing == "linear":
        return np.linspace(lo, hi, n)
    if spacing == "log":
        if lo <= 0:
            raise ConfigError("'grid.omega_min' must be positive for log spacing")
        return np.geomspace(lo, hi, n)
    raise ConfigError(f"'grid.spacing' must be 'linear' or 'log', got {spacing!r}")


def _parse_set(items):
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key '{key}'")
        out[key] = yaml.safe_load(value)
    return out


def _signs(choice: str):
    return {"both": (1.0, -1.0), "+": (1.0,), "-": (-1.0,)}[choice]


def _with_sign(p: Params, sign: float, **kw) -> Params:
    return p.replace(detuning=sign * abs(p.cavity.detuning), **kw)


# ------------------------------------------------------------- subcommands

def cmd_spectrum(p, grid, sim, options, args):
    w = make_grid(grid, lambda: np.linspace(0.5 * p.osc.omega_m, 1.5 * p.osc.omega_m, 2001))
    rows = []
    for sign in _signs(args.detuning_sign):
        q = _with_sign(p, sign)
        b = readout.s_yy(w, q)
        cols = {c: getattr(b, c) for c in b.COLUMNS}
        rows += columns_to_rows(cols, {"detuning": q.cavity.detuning})
    return rows, EXIT_OK


def cmd_asymmetry(p, grid, sim, options, args):
    W = float(options.get("window", 50.0))
    n_list = [float(n) for n in options.get("n_list", [0.1, 1.0, 10.0])]
    path = options.get("path", "resolved")
    if path not in ("resolved", "full"):
        raise ConfigError("'options.path' must be 'resolved' or 'full'")
    floor = options.get("floor", "median" if path == "resolved" else "poly")
    wm, km = p.osc.omega_m, p.osc.kappa_m
    w = make_grid(grid, lambda: np.linspace(wm - 250 * km, wm + 250 * km, 20001))

    rows = []
    for n in n_list:
        spectra = {}
        for sign in (1.0, -1.0):
            q = p.replace(n_occ=n, detuning=sign * wm)
            if path == "resolved":
                vals = readout.s_yy_resolved_sideband(w, q)
            else:
                vals = readout.s_yy(w, q).s_yy_total
            spectra[sign] = SpectrumGrid(w, vals)
        r = sidebands.sideband_asymmetry(spectra[1.0], spectra[-1.0], q, W, floor=floor)
        rows.append({
            "n_occ": n, "i_plus": r.i_plus, "i_minus": r.i_minus,
            "eta": r.eta, "n_est": r.n_est,
            "eta_times_n": r.eta * n if not math.isinf(r.eta) else math.inf,
        })
    return rows, EXIT_OK


def cmd_force(p, grid, sim, options, args):
    wm = p.osc.omega_m
    w = make_grid(grid, lambda: np.geomspace(wm / 10, wm * 10, 2001))
    # always carry the resonance row
    w = np.unique(np.append(w, wm))
    rows = []
    for km in options.get("kappa_m_list", [p.osc.kappa_m]):
        q = p.replace(kappa_m=float(km))
        b = force_mod.force_budget(w, q)
        cols = {c: getattr(b, c) for c in b.COLUMNS}
        rows += columns_to_rows(cols, {"kappa_m": q.osc.kappa_m})
    return rows, EXIT_OK


def cmd_scattering(p, grid, sim, options, args):
    wm, km = p.osc.omega_m, p.osc.kappa_m
    w = make_grid(grid, lambda: np.linspace(wm - 50 * km, wm + 50 * km, 2001))
    rows = []
    for sign in _signs(args.detuning_sign):
        q = p.replace(detuning=sign * wm)
        r = sidebands.scattering_rates(w, q)
        scatt = sidebands.syy_from_scattering(w, q)
        resolved = readout.s_yy_resolved_sideband(w, q)
        cols = {c: getattr(r, c) for c in r.COLUMNS}
        cols["syy_scattering"] = scatt
        cols["syy_resolved"] = resolved
        cols["residual"] = (scatt - resolved) / resolved
        rows += columns_to_rows(cols, {"detuning": q.cavity.detuning})
    return rows, EXIT_OK


def _suffix(path, sign, multi):
    if not multi:
        return path
    stem, dot, ext = str(path).rpartition(".")
    tag = "plus" if sign > 0 else "minus"
    return f"{stem}_{tag}.{ext}" if dot else f"{path}_{tag}"


def cmd_oracle(p, grid, sim, options, args):
    signs = _signs(args.detuning_sign)
    n_sigma = float(options.get("n_sigma", 3.0))
    rows, status = [], EXIT_OK
    for sign in signs:
        q = _with_sign(p, sign, allow_zero_coupling=True)
        cfg = oracle_mod.default_sim_config(q, **sim)
        series = oracle_mod.simulate(q, cfg)
        est = oracle_mod.welch_psd(
            series, segment_length=cfg.welch_segment_length,
            overlap=cfg.welch_overlap, skip=cfg.transient_skip,
        )
        ana = SpectrumGrid(est.omega, oracle_mod.sampled_output_psd(est.omega, q, cfg.dt, cfg.bath_noise))
        band = options.get("band") or oracle_mod.default_band(q, est)
        if len(band) != 2:
            raise ConfigError("'options.band' must be [omega_lo, omega_hi]")
        band = (float(band[0]), float(band[1]))
        rep = oracle_mod.compare(ana, est, band, n_sigma)
        if q.cavity.g0_bar == 0:
            criterion, passed = "rms_relative<=0.02", rep.rms_relative <= 0.02
        else:
            criterion, passed = "fraction_within>=0.99", rep.fraction_within >= 0.99
        rows.append({
            "detuning": q.cavity.detuning, "seed": cfg.seed, "n_samples": cfg.n_samples,
            "n_segments": est.n_segments, "n_bins": rep.n_bins,
            "fraction_within": rep.fraction_within, "rms_relative": rep.rms_relative,
            "criterion": criterion, "passed": bool(passed),
        })
        if options.get("psd_output"):
            oracle_mod.write_psd_csv(est, _suffix(options["psd_output"], sign, len(signs) > 1))
        if options.get("series_output"):
            oracle_mod.write_series_csv(series, _suffix(options["series_output"], sign, len(signs) > 1))
        if not passed:
            status = EXIT_FAILED
    return rows, status


def cmd_check(p, grid, sim, options, args):
    w = make_grid(grid, lambda: np.geomspace(1e-3 * p.osc.omega_m, 1e3 * p.osc.omega_m, 1000))
    hbar = p.hbar
    rows = []

    def record(name, value, tol):
        rows.append({"check": name, "value": float(value), "tolerance": tol, "passed": bool(value <= tol)})

    heis = readout.heisenberg_product(w, p)
    record("heisenberg_equality", np.max(np.abs(heis / hbar**2 - 1.0)), 1e-10)

    k = readout.commutator_kernels(w, p)
    scale = np.abs(readout.s_zz(w, p))
    record("commutator_k_zz", np.max(np.abs(k.k_zz) / scale), 1e-12)
    record("commutator_k_zf", np.max(np.abs(np.abs(k.k_zf) / hbar - 1.0)), 1e-10)

    zp = p.replace(n_occ=0.0)
    var = integrated_zero_point_variance(zp.osc, zp.units)
    record("zero_point_variance", abs(var / (hbar / (2 * p.osc.mass * p.osc.omega_m)) - 1.0), 1e-3)

    szf_sign = -1.0 if args.flip_szf else 1.0
    tol = 3.0 * p.cavity.kappa_r / p.osc.omega_m
    ref = sidebands.zero_point_integral(zp)
    for sign in (1.0, -1.0):
        q = _with_sign(zp, sign)
        corr = sidebands.correlation_integral(q, szf_sign)
        name = "correlation_identity_" + ("plus" if sign > 0 else "minus")
        record(name, abs(corr + sign * ref) / ref, tol)

    exact, _ = force_mod.sql_zp_ratio(np.array([p.osc.omega_m]), p.osc, p.units)
    record("sql_ratio_on_resonance", abs(exact[0] - 1.0), 1e-12)

    status = EXIT_OK if all(r["passed"] for r in rows) else EXIT_FAILED
    return rows, status


HELP = {
    "spectrum": "noise budget for both detuning signs",
    "asymmetry": "sideband areas and eta over a list of occupancies",
    "force": "force-sensitivity budget over a list of kappa_m",
    "scattering": "Stokes and anti-Stokes scattering rates",
    "oracle": "time-domain simulation checked against the analytic spectrum",
    "check": "closed-form invariant suite",
}

COMMANDS = {
    "spectrum": cmd_spectrum,
    "asymmetry": cmd_asymmetry,
    "force": cmd_force,
    "scattering": cmd_scattering,
    "oracle": cmd_oracle,
    "check": cmd_check,
}


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qmeter", description="Quantum noise of a detuned-cavity position meter.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HELP[name])
        sp.add_argument("config", nargs="?", help="JSON or YAML config file")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--output", help="write the table here instead of stdout")
        sp.add_argument("--seed", type=int, help="override sim.seed")
        sp.add_argument("--detuning-sign", choices=("both", "+", "-"), default="both")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a model parameter")
        if name == "check":
            sp.add_argument("--flip-szf", action="store_true", help="debug: flip the sign of S_zF (canary)")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        status = _run(args)
    for msg in dict.fromkeys(str(w.message) for w in caught):
        print(f"warning: {msg}", file=sys.stderr)
    return status


def _run(args) -> int:
    try:
        data = load_config(args.config)
        params, grid, sim, options = split_config(data)
        params.update(_parse_set(args.set))
        if args.seed is not None:
            sim["seed"] = args.seed
        p = params_from_mapping(params, allow_zero_coupling=args.command == "oracle")
        rows, status = COMMANDS[args.command](p, grid, sim, options, args)
    except (ConfigError, ValidationError, oracle_mod.UnstableConfig, oracle_mod.BandMismatch,
            oracle_mod.TooShort, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    if args.output:
        with open(args.output, "w", newline="") as fh:
            (write_json if args.format == "json" else write_csv)(rows, fh)
    else:
        (write_json if args.format == "json" else write_csv)(rows, sys.stdout)
    return status


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
