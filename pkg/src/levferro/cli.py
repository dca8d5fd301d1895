"""Command-line front-end: ``levferro <subcommand> --config PATH [options]``.

Every run writes to ``<out>/<subcommand>/<timestamp>/``: ``result.json``
and/or ``result.csv`` (deterministic for fixed config and seed), plot-data
CSVs, and ``metadata.json`` holding the timestamp and command line.  The
file ``<out>/<subcommand>/latest`` names the most recent run directory.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, acceptance, axion, field, inversion, langevin, noise, signals, trap
from .config import RunConfig, load_config
from .errors import ConfigError, LevFerroError

log = logging.getLogger("levferro")

SUBCOMMANDS = (
    "modes", "invert", "fit-coil", "noise", "lockin", "fit-ringdown", "fit-lorentzian",
    "psd", "resolution", "simulate", "axion-reach", "reproduce",
)


# -- output ---------------------------------------------------------------------

def _clean(obj):
    """Recursively convert numpy scalars/arrays for JSON."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def _flatten(d, prefix=""):
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        elif isinstance(v, list):
            yield key, json.dumps(v)
        else:
            yield key, v


class Run:
    """Output directory and artifact writers for one subcommand invocation."""

    def __init__(self, args, name: str):
        self.args = args
        self.name = name
        stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%S_%fZ")
        base = Path(args.out) / name
        self.dir = base / stamp
        self.dir.mkdir(parents=True, exist_ok=False)
        (base / "latest").write_text(stamp + "\n")
        meta = {
            "timestamp_utc": stamp,
            "argv": sys.argv,
            "version": __version__,
            "seed": args.seed,
            "config": str(Path(args.config).resolve()),
        }
        (self.dir / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    def result(self, payload: dict) -> None:
        payload = _clean(payload)
        if self.args.format in ("json", "both"):
            (self.dir / "result.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        if self.args.format in ("csv", "both"):
            with open(self.dir / "result.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["key", "value"])
                for k, v in _flatten(payload):
                    w.writerow([k, v])

    def table(self, filename: str, header, rows) -> Path:
        """Plot data: always CSV."""
        p = self.dir / filename
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
        return p


def _read_columns(path, names):
    """Read named numeric columns from a CSV with a header row."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ConfigError(f"{path}: empty file")
        missing = [n for n in names if n not in reader.fieldnames]
        if missing:
            raise ConfigError(f"{path}: missing columns {missing}")
        cols = {n: [] for n in reader.fieldnames}
        for lineno, row in enumerate(reader, start=2):
            for n in reader.fieldnames:
                v = row[n]
                try:
                    cols[n].append(float(v) if v not in (None, "") else np.nan)
                except ValueError:
                    raise ConfigError(f"{path}: line {lineno}: column {n}: not a number: {v!r}") from None
    return {k: np.array(v) for k, v in cols.items()}


# -- subcommands -------------------------------------------------------------------

def cmd_modes(cfg: RunConfig, args, run: Run) -> int:
    mag, trp = cfg.magnet(), cfg.trap()
    fz, fb, eq = trap.mode_frequencies(mag, trp)
    fa = trap.alpha_frequency(mag.moment, cfg["measurement"]["b0_t"], mag.inertia)
    res = {
        "f_z_hz": fz,
        "f_beta_hz": fb,
        "f_alpha_hz": fa,
        "f_beta_shifted_hz": float(trap.beta_shifted(fb, fa)),
        "z0_m": eq.z0,
        "r_eq_m": eq.r_eq,
        "derived": trap.derived_properties(mag),
    }
    run.result(res)
    print(f"f_z = {fz:.3f} Hz   f_beta = {fb:.3f} Hz   f_alpha = {fa:.3f} Hz   z0 = {eq.z0 * 1e6:.1f} um")
    return 0


def cmd_invert(cfg: RunConfig, args, run: Run) -> int:
    inputs = cfg.measured_inputs()
    methods = ("linear", "monte_carlo") if args.method == "both" else (args.method,)
    res = {}
    for m in methods:
        r = inversion.propagate_uncertainty(inputs, m, n_samples=args.n_samples, seed=args.seed)
        res[m] = r.as_dict()
        print(f"{m:12s} R = {r.R * 1e6:.3f} +- {r.sigma_R * 1e6:.3f} um   "
              f"M = {r.M / 1e5:.4f} +- {r.sigma_M / 1e5:.4f} e5 A/m   corr = {r.correlation_RM:+.3f}")
    res["mu0_M_t"] = inversion.MU_0 * res[methods[0]]["M"]
    run.result(res)
    return 0


def cmd_fit_coil(cfg: RunConfig, args, run: Run) -> int:
    cols = _read_columns(args.data, ["coil_id", "current_a", "f_alpha_hz"])
    sig = cols.get("sigma_hz")
    if sig is None or np.all(np.isnan(sig)):
        sig = np.full(cols["f_alpha_hz"].shape, cfg["coils"]["default_sigma_hz"])
    else:
        sig = np.where(np.isnan(sig), cfg["coils"]["default_sigma_hz"], sig)
    mag = cfg.magnet()
    fit = field.fit_coil_calibration(cols["coil_id"].astype(int), cols["current_a"], cols["f_alpha_hz"], mag,
                                     sigma=sig, fit_quantity=args.fit_quantity or cfg["coils"]["fit_quantity"])
    run.result(fit.as_dict())
    rows = []
    for k in (1, 2):
        sel = cols["coil_id"] == k
        grid = np.linspace(cols["current_a"][sel].min(), cols["current_a"][sel].max(), 201)
        f = field.alpha_freq_vs_current(mag, fit.b0, fit.coils[k], grid)
        rows += [(k, i, fi) for i, fi in zip(grid, f)]
    run.table("fit_curve.csv", ["coil_id", "current_a", "f_alpha_hz"], rows)
    print(f"B0 = {fit.b0 * 1e6:.4f} uT  theta1 = {np.degrees(fit.coils[1].angle):.2f} deg  "
          f"lambda1 = {fit.coils[1].coupling * 1e6:.2f} uT/A  reduced chi2 = {fit.reduced_chi2:.3g}"
          + ("  [DEGENERATE]" if fit.degenerate else ""))
    return 0


def cmd_noise(cfg: RunConfig, args, run: Run) -> int:
    mag = cfg.magnet()
    m, n = cfg["measurement"], cfg["noise"]
    lam = cfg["coils"]["coil1_coupling_t_per_a"]
    rep = noise.noise_budget(mag, m["temperature_k"], m["f_alpha_hz"], m["q"], np.radians(n["theta_deg"]),
                             n["input_inductance_h"], n["total_inductance_h"], lam, n["backaction_excess_factor"])
    run.result(rep.as_dict())
    V = rep.V
    rows = [(name, s, np.sqrt(s), noise.energy_resolution(s, V)) for name, s in rep.components.items()]
    rows.append(("total", rep.S_B, rep.sqrt_S_B, rep.E_R_hbar))
    rows.append(("erl", rep.erl_S_B, np.sqrt(rep.erl_S_B), 1.0))
    run.table("levels.csv", ["component", "S_B_t2_per_hz", "sqrt_S_B_t_per_rthz", "E_R_hbar"], rows)
    print(f"{'component':12s} {'sqrt(S_B) [T/rtHz]':>20s} {'E_R [hbar]':>12s}")
    for name, _, sq, er in rows:
        print(f"{name:12s} {sq:20.4e} {er:12.4e}")
    return 0


def cmd_lockin(cfg: RunConfig, args, run: Run) -> int:
    ts = signals.load_timeseries(args.input)
    f_ref = args.f_ref if args.f_ref is not None else cfg["measurement"]["f_alpha_hz"]
    bw = args.bandwidth if args.bandwidth is not None else cfg["lockin"]["noise_bandwidth_hz"]
    lo = signals.lockin_demodulate(ts, f_ref, bw, order=cfg["lockin"]["order"],
                                   ref_phase=args.ref_phase, scale=args.scale or cfg["lockin"]["scale"])
    run.table("lockin.csv", ["t_s", "x", "y", "amplitude", "phase_rad"],
              zip(lo.t, lo.x, lo.y, lo.amplitude, lo.phase))
    settled = lo.settled()
    run.result({
        "f_ref_hz": f_ref, "noise_bandwidth_hz": bw, "time_constant_s": lo.tau, "scale": lo.scale,
        "n_points": int(lo.t.size),
        "settled_mean_amplitude": float(np.mean(settled.amplitude)) if settled.t.size else None,
        "settled_rms_x": float(np.sqrt(np.mean(settled.x**2))) if settled.t.size else None,
    })
    return 0


def cmd_fit_ringdown(cfg: RunConfig, args, run: Run) -> int:
    cols = _read_columns(args.input, ["t", "amplitude"])
    sig = cols.get("sigma")
    rd = signals.fit_ringdown(cols["t"], cols["amplitude"], sigma=sig, frequency=args.frequency)
    run.result(rd.as_dict())
    model = rd.initial_amplitude * np.exp(-(cols["t"] - cols["t"][0]) / rd.tau) + rd.offset
    run.table("ringdown_fit.csv", ["t", "amplitude", "model"], zip(cols["t"], cols["amplitude"], model))
    print(f"tau = {rd.tau:.6g} +- {rd.sigma_tau:.2g} s" + (f"   Q = {rd.Q:.6g}" if args.frequency else ""))
    return 0


def cmd_fit_lorentzian(cfg: RunConfig, args, run: Run) -> int:
    cols = _read_columns(args.input, ["f", "S"])
    lf = signals.fit_lorentzian(cols["f"], cols["S"], n_averages=args.n_averages)
    run.result(lf.as_dict())
    model = signals.lorentzian(cols["f"], lf.f0, lf.linewidth, lf.amplitude, lf.background)
    run.table("lorentzian_fit.csv", ["f_hz", "S", "model"], zip(cols["f"], cols["S"], model))
    print(f"f0 = {lf.f0:.6g} Hz   linewidth = {lf.linewidth:.4g} +- {lf.sigmas['linewidth']:.2g} Hz   Q = {lf.Q:.4g}")
    return 0


def cmd_psd(cfg: RunConfig, args, run: Run) -> int:
    ts = signals.load_timeseries(args.input)
    seg = args.segment_length or min(len(ts), int(round(ts.sample_rate * 10)))
    p = signals.welch_psd(ts, seg, args.overlap, args.window)
    run.table("psd.csv", ["f_hz", "S"], zip(p.f, p.S))
    df = p.f[1] - p.f[0]
    run.result({"n_averages": p.n_averages, "window": p.window, "segment_length": seg,
                "resolution_hz": df, "integrated_power": float(np.sum(p.S) * df),
                "mean_square": float(np.mean(ts.samples**2))})
    return 0


def cmd_resolution(cfg: RunConfig, args, run: Run) -> int:
    bw = cfg["lockin"]["noise_bandwidth_hz"]
    coil = cfg.coil(1)
    mag = cfg.magnet()
    if args.input:
        cols = _read_columns(args.input, ["current_a", "amplitude"])
        cur, amp = cols["current_a"], cols["amplitude"]
    else:
        sim = cfg.sim_config(mag, seed=args.seed)
        data = langevin.synth_resolution_dataset(sim, cfg.current_grid(), coil, sim.f0, noise_bandwidth=bw)
        cur, amp = (np.array(x) for x in zip(*data))
    run.table("crossing_data.csv", ["current_a", "amplitude"], zip(cur, amp))
    cross = signals.extract_snr1_crossing(cur, amp)
    res = signals.field_resolution_from_crossing(cross, coil, bw)
    er = noise.energy_resolution(res.S_B, mag.volume)
    grid = np.geomspace(max(np.abs(cur).min(), 1e-30), np.abs(cur).max(), 101)
    run.table("crossing_model.csv", ["current_a", "amplitude"],
              zip(grid, signals.two_regime(grid, cross.response_slope, cross.noise_floor)))
    out = {"crossing": cross.as_dict(), "resolution": res.as_dict(), "E_R_hbar": er,
           "noise_bandwidth_hz": bw, "source": "file" if args.input else "simulation"}
    run.result(out)
    print(f"I_snr1 = {cross.I_snr1:.4g} A   sqrt(S_B) = {res.sqrt_S_B:.4g} T/rtHz   E_R = {er:.4g} hbar")
    return 0


def cmd_simulate(cfg: RunConfig, args, run: Run) -> int:
    sim = cfg.sim_config(seed=args.seed)
    if args.duration is not None:
        sim = replace(sim, duration=args.duration)
    b1 = args.drive_amplitude if args.drive_amplitude is not None else cfg["simulation"]["drive_amplitude_t"]
    if b1 > 0:
        sim = replace(sim, drive=langevin.Drive(b1, cfg.coil(1).angle, sim.f0))
    out = langevin.simulate_alpha_mode(sim)
    out.angle.to_binary(run.dir / "angle.flts")
    out.detector.to_binary(run.dir / "detector.flts")
    if args.format in ("csv", "both"):
        out.angle.to_csv(run.dir / "angle.csv")
        out.detector.to_csv(run.dir / "detector.csv")
    kT = langevin.K_B * sim.temperature
    res = {
        "f0_hz": sim.f0, "Q": sim.Q, "linewidth_hz": sim.linewidth, "n_samples": len(out.angle),
        "sample_rate_hz": sim.sample_rate, "seed": sim.seed, "drive_amplitude_t": b1,
        "theta_mean_square": float(np.mean(out.angle.samples**2)),
        "theta_mean_square_equipartition": kT / sim.stiffness if kT > 0 else 0.0,
    }
    run.result(res)
    return 0


def cmd_axion_reach(cfg: RunConfig, args, run: Run) -> int:
    a = cfg["axion"]
    env = cfg.environment()
    grid = cfg.frequency_grid()
    meta = {}
    for name in ("current", "improved"):
        c = axion.exclusion_curve(cfg.sensor(name), env, a["t_int_s"], grid, a["tuning"], a["coherence_variant"])
        run.table(f"reach_{name}.csv", ["frequency_hz", "mass_ev", "g_limit"], c.rows())
        meta[name] = c.metadata
        meta[name]["slope_above_1hz"] = axion.log_slope(c, 1.0, grid[-1])
        print(f"{name:9s} g_limit(1 mHz) = {np.interp(1e-3, c.frequency, c.g_limit):.3e}   "
              f"high-f slope = {meta[name]['slope_above_1hz']:.3f}")
    if args.bounds:
        bounds = axion.load_reference_bounds(args.bounds)
        rows = [(lab, f, g) for lab, (fs, gs) in bounds.items() for f, g in zip(fs, gs)]
        run.table("reference_bounds.csv", ["label", "frequency_hz", "g_limit"], rows)
        meta["reference_bounds"] = list(bounds)
    run.result(meta)
    return 0


def cmd_reproduce(cfg: RunConfig, args, run: Run) -> int:
    only = set(args.only) if args.only else None
    checks = acceptance.run_checks(cfg, skip_slow=args.skip_slow, only=only)
    run.table("checks.csv", ["number", "title", "passed"], [(c.number, c.title, c.passed) for c in checks])
    run.result({"checks": [c.as_dict() for c in checks], "all_passed": all(c.passed for c in checks)})
    n_pass = sum(c.passed for c in checks)
    print(f"{n_pass}/{len(checks)} checks passed")
    return 0 if n_pass == len(checks) else 1


COMMANDS = {
    "modes": cmd_modes,
    "invert": cmd_invert,
    "fit-coil": cmd_fit_coil,
    "noise": cmd_noise,
    "lockin": cmd_lockin,
    "fit-ringdown": cmd_fit_ringdown,
    "fit-lorentzian": cmd_fit_lorentzian,
    "psd": cmd_psd,
    "resolution": cmd_resolution,
    "simulate": cmd_simulate,
    "axion-reach": cmd_axion_reach,
    "reproduce": cmd_reproduce,
}


# -- parser ---------------------------------------------------------------------------

def _common(parser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="TOML run configuration (required)")
    parser.add_argument("--out", default=d("out"), help="output root directory (default: out)")
    parser.add_argument("--seed", type=int, default=d(0), help="random seed (default: 0)")
    parser.add_argument("--format", choices=("json", "csv", "both"), default=d("json"))
    parser.add_argument("--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levferro", description="Levitated-ferromagnet magnetometer toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _common(p, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _common(common, suppress=True)
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND")

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    add("modes", "equilibrium and mode frequencies of the configured magnet")
    s = add("invert", "radius and magnetization from f_z, f_beta with uncertainties")
    s.add_argument("--method", choices=("linear", "monte_carlo", "both"), default="both")
    s.add_argument("--n-samples", type=int, default=100_000)
    s = add("fit-coil", "fit B0 and coil calibrations to an alpha-frequency sweep")
    s.add_argument("--data", required=True, help="CSV: coil_id,current_a,f_alpha_hz[,sigma_hz]")
    s.add_argument("--fit-quantity", choices=("f", "f2"))
    add("noise", "thermal and back-action noise budget")
    s = add("lockin", "demodulate a time series")
    s.add_argument("--input", required=True, help="time series (CSV t,value or FLTS binary)")
    s.add_argument("--f-ref", type=float)
    s.add_argument("--bandwidth", type=float, help="equivalent noise bandwidth (Hz)")
    s.add_argument("--ref-phase", type=float, default=0.0)
    s.add_argument("--scale", choices=("rms", "peak"))
    s = add("fit-ringdown", "exponential ringdown fit")
    s.add_argument("--input", required=True, help="CSV: t,amplitude[,sigma]")
    s.add_argument("--frequency", type=float, help="mode frequency (Hz) for Q")
    s = add("fit-lorentzian", "Lorentzian linewidth fit to a PSD")
    s.add_argument("--input", required=True, help="CSV: f,S")
    s.add_argument("--n-averages", type=int)
    s = add("psd", "Welch power spectral density")
    s.add_argument("--input", required=True)
    s.add_argument("--segment-length", type=int)
    s.add_argument("--overlap", type=float, default=0.5)
    s.add_argument("--window", choices=signals.WINDOWS, default="hann")
    s = add("resolution", "SNR=1 crossing and field resolution")
    s.add_argument("--input", help="CSV: current_a,amplitude (simulated from the config if omitted)")
    s = add("simulate", "simulate the alpha mode")
    s.add_argument("--duration", type=float)
    s.add_argument("--drive-amplitude", type=float, help="peak drive field (T) at the mode frequency")
    s = add("axion-reach", "one-year g_aee reach curves")
    s.add_argument("--bounds", help="reference-bound CSV: frequency_hz,g_limit,label")
    s = add("reproduce", "run the acceptance checks")
    s.add_argument("--skip-slow", action="store_true")
    s.add_argument("--only", type=int, action="append", metavar="N")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("levferro: error: a subcommand is required", file=sys.stderr)
        return 2
    if args.config is None:
        parser.print_usage(sys.stderr)
        print("levferro: error: --config is required", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"levferro: config error: {exc}", file=sys.stderr)
        return 2
    try:
        run = Run(args, args.command)
        return COMMANDS[args.command](cfg, args, run)
    except ConfigError as exc:
        print(f"levferro {args.command}: input error: {exc}", file=sys.stderr)
        return 2
    except (LevFerroError, OSError) as exc:
        print(f"levferro {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
