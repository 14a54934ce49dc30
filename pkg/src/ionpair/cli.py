"""Command line front end.

Subcommands
-----------
g2         conditioned or polarization-blind correlation curves
spectrum   steady-state excitation spectrum versus repumper detuning
purity     pair purity and photon-number summary for one window
simulate   Monte Carlo click streams, optionally through the detector model
correlate  coincidence histogram of recorded click streams
fit        parameter estimation from spectrum or correlation CSV data
selftest   quick internal consistency battery

Times take a unit suffix (ps, ns, us, ms, s), frequencies a cyclic one
(Hz, kHz, MHz, GHz, converted to angular internally) and angles need
pi, rad or deg.  The --params argument is a preset name or a JSON file.
Outputs are plain CSV with '# key = value' provenance headers and are
byte-identical between runs for equal inputs.

Exit codes: 0 success, 1 usage error, 2 unreadable or malformed input
file, 3 numerical failure, 4 selftest failure.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import numpy as np

from . import correlations as corr
from .correlator import CorrelatorConfig, conditioned_g2_estimate, correlate
from .dynamics import NumericalError
from .fitting import DataSet, FitResult, fit_g2_joint, fit_spectrum
from .params import (PRESETS, TWO_PI, ExperimentParams, format_angle,
                     get_preset, parse_angle)
from .streams import StreamFormatError, load_stream, save_stream
from .trajectory import (DetectionConfig, DetectorChannel, detect,
                         simulate_emissions)

_TIME_UNITS = {"ps": 1e-12, "ns": 1e-9, "us": 1e-6, "ms": 1e-3, "s": 1.0}
_FREQ_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}


class _UsageError(Exception):
    pass


class _InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse would exit(2); the contract here is exit code 1 for usage
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        # accept unit-suffixed negatives such as "--lo -10MHz" as values
        self._negative_number_matcher = re.compile(r"^-\d+|^-\.\d|^-\d*\.\d")


def parse_time(text: str) -> float:
    """'24ns' -> 2.4e-8; the unit suffix is required."""
    m = re.fullmatch(r"\s*([+-]?[\d.]+(?:[eE][+-]?\d+)?)\s*(ps|ns|us|ms|s)\s*",
                     str(text))
    if not m:
        raise ValueError(f"time {text!r} needs a unit suffix (ps/ns/us/ms/s)")
    return float(m.group(1)) * _TIME_UNITS[m.group(2)]


def parse_time_ps(text: str) -> int:
    return int(round(parse_time(text) / 1e-12))


def parse_freq(text: str) -> float:
    """'-15MHz' -> -2 pi 15e6 rad/s; the unit suffix is required."""
    m = re.fullmatch(r"\s*([+-]?[\d.]+(?:[eE][+-]?\d+)?)\s*([kMG]?Hz)\s*",
                     str(text), flags=re.IGNORECASE)
    if not m:
        raise ValueError(
            f"frequency {text!r} needs a unit suffix (Hz/kHz/MHz/GHz)")
    return TWO_PI * float(m.group(1)) * _FREQ_UNITS[m.group(2).lower()]


def _load_params(spec: str) -> ExperimentParams:
    if spec in PRESETS:
        return get_preset(spec)
    path = Path(spec)
    if not path.exists():
        raise _InputError(
            f"{spec!r} is neither a preset ({', '.join(sorted(PRESETS))}) "
            f"nor an existing parameter file")
    try:
        return ExperimentParams.load(path)
    except (ValueError, OSError) as exc:
        raise _InputError(f"cannot read parameters from {spec}: {exc}")


def _mhz(omega: float) -> float:
    return omega / TWO_PI / 1e6


# -- g2 ------------------------------------------------------------------

def cmd_g2(args) -> int:
    params = _load_params(args.params)
    grid = corr.default_grid(args.t_max, args.dt)
    eps = (args.eps_init, args.eps_minus, args.eps_plus)
    if args.total:
        curves = [corr.g2_total(params, grid)]
    elif any(e > 0 for e in eps):
        errors = corr.ErrorModel(*eps)
        minus, plus = corr.apply_error_model(params, errors, grid, args.first)
        curves = {"sigma-": [minus], "sigma+": [plus],
                  "both": [minus, plus]}[args.second]
    else:
        minus, plus = corr.g2_pair(params, args.first, grid)
        curves = {"sigma-": [minus], "sigma+": [plus],
                  "both": [minus, plus]}[args.second]
    for c in curves:
        tau, peak = c.peak()
        print(f"{c.kind}: peak g2 = {peak:.4f} at tau = {tau * 1e9:.2f} ns")
    if args.output:
        corr.write_table_csv(
            args.output, grid * 1e9,
            {c.kind: c.values for c in curves}, "tau_ns",
            meta={"params": params.fingerprint(),
                  "command": "g2", "first": "-" if args.total else args.first})
        print(f"wrote {args.output}")
    return 0


# -- spectrum ------------------------------------------------------------

def cmd_spectrum(args) -> int:
    params = _load_params(args.params)
    grid = np.linspace(args.lo, args.hi, args.points)
    sc = corr.excitation_spectrum(params, grid, scale=args.scale,
                                  background=args.background)
    bad = int(np.sum(~sc.ok))
    if bad:
        print(f"warning: {bad} of {sc.ok.size} points failed to solve",
              file=sys.stderr)
    if args.dips:
        dips = corr.find_dips(sc)
        raman = corr.raman_positions(params)
        print("dips_mhz:", " ".join(f"{_mhz(d):.3f}" for d in dips))
        print("raman_mhz:", " ".join(f"{_mhz(r):.3f}" for r in raman))
    if args.output:
        corr.write_table_csv(
            args.output, grid / TWO_PI / 1e6,
            {"rate": sc.values, "ok": sc.ok.astype(float)},
            "delta_866_mhz",
            meta={"params": params.fingerprint(), "command": "spectrum",
                  "scale": args.scale, "background": args.background})
        print(f"wrote {args.output}")
    return 0


# -- purity --------------------------------------------------------------

def cmd_purity(args) -> int:
    params = _load_params(args.params)
    grid = corr.default_grid(args.t_max, args.dt)
    minus, plus = corr.g2_pair(params, "sigma-", grid)
    p = corr.purity(minus, plus, args.t_window)
    print(f"pair purity p({args.t_window * 1e9:.1f} ns) = {p:.4f}")
    print(f"pair probability p/(1+p) = {corr.pair_probability(p):.6f}")
    for pol in ("sigma-", "sigma+"):
        n = corr.mean_photon_number(params, pol, args.t_window)
        print(f"mean {pol} photons in window = {n:.4f}")
    if args.output:
        tau, curve = corr.purity_curve(minus, plus)
        corr.write_table_csv(
            args.output, tau * 1e9, {"purity": curve}, "tau_ns",
            meta={"params": params.fingerprint(), "command": "purity"})
        print(f"wrote {args.output}")
    return 0


# -- simulate ------------------------------------------------------------

def cmd_simulate(args) -> int:
    params = _load_params(args.params)
    emissions = simulate_emissions(params, args.duration, args.seed,
                                   max_events=args.max_events)
    print(f"emitted {len(emissions)} photons in "
          f"{emissions.duration_s * 1e3:.3f} ms "
          f"({emissions.rate():.3e} /s)")
    if args.detect is None:
        save_stream(args.output, emissions)
        print(f"wrote {args.output}")
        return 0
    arm = lambda pol: DetectorChannel(args.detect, pol,
                                      crosstalk=args.crosstalk,
                                      dark_rate=args.dark_rate)
    config = DetectionConfig(channel_1=arm("sigma-"), channel_2=arm("sigma+"))
    d1, d2 = detect(emissions, config, args.seed)
    out = Path(args.output)
    for tag, stream in (("1", d1), ("2", d2)):
        path = out.with_name(f"{out.stem}-{tag}{out.suffix}")
        save_stream(path, stream)
        print(f"wrote {path} ({len(stream)} clicks, "
              f"{stream.meta['accepted_pol']})")
    return 0


# -- correlate -----------------------------------------------------------

def cmd_correlate(args) -> int:
    config = CorrelatorConfig(bin_width_ps=args.bin, window_ps=args.window)
    stream_a = load_stream(args.stream_a)
    if args.wavelength:
        stream_a = stream_a.select(wavelength=args.wavelength)
    if args.stream_b is None:
        stream_b = stream_a     # same object: self pairs get removed
    else:
        stream_b = load_stream(args.stream_b)
        if args.wavelength:
            stream_b = stream_b.select(wavelength=args.wavelength)
    gram = conditioned_g2_estimate(stream_a, stream_b, config,
                                   pol_1=args.pol_a, pol_2=args.pol_b)
    if gram.flagged:
        print("warning: a stream is empty inside the overlap, "
              "values are unnormalized", file=sys.stderr)
    print(f"pairs = {gram.total_pairs}, rate_a = {gram.rate_a:.4e} /s, "
          f"rate_b = {gram.rate_b:.4e} /s, overlap = {gram.overlap_s:.4f} s")
    if args.output:
        corr.write_table_csv(
            args.output, gram.config.bin_centers_ps() / 1000.0,
            {"counts": gram.counts.astype(float), "g2": gram.values},
            "tau_ns",
            meta={"command": "correlate", "bin_ps": config.bin_width_ps,
                  "window_ps": config.window_ps,
                  "total_pairs": gram.total_pairs,
                  "rate_a": f"{gram.rate_a:.10g}",
                  "rate_b": f"{gram.rate_b:.10g}",
                  "flagged": gram.flagged})
        print(f"wrote {args.output}")
    return 0


# -- fit -----------------------------------------------------------------

def _read_fit_table(path, kind, x_unit):
    try:
        x, columns, meta = corr.read_table_csv(path)
    except (OSError, ValueError) as exc:
        raise _InputError(f"cannot read {path}: {exc}")
    err = columns.pop("err", None)
    candidates = [k for k in columns if k != "ok"]
    if not candidates:
        raise _InputError(f"{path}: no data column")
    label = kind if kind in columns else candidates[0]
    try:
        return DataSet(kind, x * x_unit, columns[label], err=err)
    except ValueError as exc:
        raise _InputError(f"{path}: {exc}")


def _print_fit(res: FitResult) -> None:
    state = "converged" if res.converged else "did not converge"
    print(f"{state}: chi2 = {res.chi2:.2f} over {res.dof} dof "
          f"(reduced {res.reduced_chi2():.3f}), nfev = {res.nfev}")
    for name, value in res.params.items():
        sig = res.sigma.get(name) if res.sigma else None
        err_txt = "" if sig is None else " +- "
        if name.startswith(("omega", "delta")):
            txt = f"2pi x {_mhz(value):.6g} MHz"
            if sig is not None:
                err_txt += f"2pi x {_mhz(sig):.3g} MHz"
        elif name.startswith("alpha"):
            txt = format_angle(value)
            if sig is not None:
                err_txt += f"{sig:.3g} rad"
        elif name == "b_field":
            txt = f"{value:.5g} G"
            if sig is not None:
                err_txt += f"{sig:.3g} G"
        else:
            txt = f"{value:.6g}"
            if sig is not None:
                err_txt += f"{sig:.3g}"
        print(f"  {name} = {txt}{err_txt}")


def cmd_fit(args) -> int:
    params = _load_params(args.params)
    free = tuple(n.strip() for n in args.free.split(",") if n.strip())
    if args.mode == "spectrum":
        if len(args.data) != 1:
            raise _UsageError("fit spectrum takes exactly one data file")
        data = _read_fit_table(args.data[0], "spectrum", TWO_PI * 1e6)
        res = fit_spectrum(data, params, free=free, scale=args.scale,
                           background=args.background,
                           restarts=args.restarts, seed=args.seed,
                           maxfev=args.maxfev)
    else:
        kinds = [k.strip() for k in args.kinds.split(",")]
        if len(kinds) != len(args.data):
            raise _UsageError(
                f"--kinds lists {len(kinds)} entries for "
                f"{len(args.data)} data files")
        datasets = [_read_fit_table(p, k, 1e-9)
                    for p, k in zip(args.data, kinds)]
        errors = None
        if args.eps_init or args.eps_minus or args.eps_plus:
            errors = corr.ErrorModel(args.eps_init, args.eps_minus,
                                     args.eps_plus)
        res = fit_g2_joint(datasets, params, free=free, errors=errors,
                           restarts=args.restarts, seed=args.seed,
                           maxfev=args.maxfev)
    _print_fit(res)
    if args.save_params:
        res.experiment.save(args.save_params)
        print(f"wrote {args.save_params}")
    return 0


# -- selftest ------------------------------------------------------------

def _selftest_checks():
    import tempfile

    from . import atom
    from .correlator import correlate_brute_force
    from .dynamics import steady_state
    from .streams import read_stream, write_stream

    def amplitudes_close():
        for upper in atom.P_LEVELS:
            for branch, gamma in (("SP", 1.0), ("DP", 1.0)):
                tot = sum(t.amplitude ** 2 for t in atom.TRANSITIONS
                          if t.upper == upper and t.branch == branch)
                assert abs(tot - gamma) < 1e-12, (upper, branch, tot)

    def liouvillian_traceless():
        p = get_preset("weak")
        lmat = atom.build_liouvillian(p).matrix
        rng = np.random.default_rng(0)
        r = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        rho = r @ r.conj().T
        rho /= np.trace(rho)
        drho = (lmat @ rho.reshape(-1)).reshape(8, 8)
        # L entries are ~1e8/s, so the cancellation is relative
        assert abs(np.trace(drho)) < 1e-12 * np.linalg.norm(lmat)

    def steady_state_sane():
        p = get_preset("weak")
        lv = atom.build_liouvillian(p)
        rho = steady_state(lv)
        assert abs(np.trace(rho).real - 1.0) < 1e-9
        assert np.all(np.diag(rho).real > -1e-12)

    def g2_long_time_limit():
        p = get_preset("weak")
        grid = np.linspace(0.0, 80e-6, 161)
        c = corr.g2_conditioned(p, "sigma-", "sigma+", grid)
        assert abs(c.values[-1] - 1.0) < 1e-3, c.values[-1]

    def weak_peak_regression():
        p = get_preset("weak")
        c = corr.g2_conditioned(p, "sigma-", "sigma-")
        tau, peak = c.peak()
        assert abs(peak - 16.49) < 0.5, peak
        assert abs(tau - 28.5e-9) < 3e-9, tau

    def correlator_matches_brute_force():
        from .trajectory import ClickStream
        rng = np.random.default_rng(3)
        ts = np.cumsum(rng.integers(1, 2000, size=400))
        s = ClickStream(ts, np.zeros(400), np.zeros(400),
                        duration_ps=int(ts[-1]) + 1)
        cfg = CorrelatorConfig(bin_width_ps=500, window_ps=10_000)
        assert np.array_equal(correlate(s, None, cfg).counts,
                              correlate_brute_force(s, None, cfg))

    def stream_round_trip():
        from .trajectory import ClickStream
        rng = np.random.default_rng(4)
        ts = np.cumsum(rng.integers(1, 1000, size=100))
        s = ClickStream(ts, rng.integers(0, 3, 100), rng.integers(0, 2, 100),
                        duration_ps=int(ts[-1]) + 1, channel=1)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "chk.clk"
            write_stream(path, s)
            back = read_stream(path)
        assert np.array_equal(back.timestamps_ps, s.timestamps_ps)
        assert np.array_equal(back.pol, s.pol)

    def sampler_rate_matches_master_equation():
        p = get_preset("weak")
        em = simulate_emissions(p, 5e-3, seed=1)
        rho = steady_state(atom.build_liouvillian(p))
        want = (p.gamma_sp + p.gamma_dp) * (rho[2, 2].real + rho[3, 3].real)
        assert abs(em.rate() / want - 1.0) < 0.05, em.rate() / want

    return [
        ("decay amplitudes close to unity per level", amplitudes_close),
        ("liouvillian preserves trace", liouvillian_traceless),
        ("steady state is a unit-trace density matrix", steady_state_sane),
        ("conditioned g2 approaches 1 at long delay", g2_long_time_limit),
        ("weak-drive peak regression", weak_peak_regression),
        ("fast correlator equals brute force", correlator_matches_brute_force),
        ("binary stream round trip", stream_round_trip),
        ("jump sampler rate matches master equation",
         sampler_rate_matches_master_equation),
    ]


def cmd_selftest(args) -> int:
    failures = 0
    for name, check in _selftest_checks():
        try:
            check()
        except Exception as exc:   # report, keep going
            failures += 1
            print(f"FAIL - {name}: {exc}")
        else:
            print(f"ok   - {name}")
    if failures:
        print(f"{failures} check(s) failed")
        return 4
    print("all checks passed")
    return 0


# -- parser --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ionpair",
                     description="Polarization-correlated photon pairs "
                                 "from a single driven ion")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_params(p):
        p.add_argument("--params", default="weak",
                       help="preset name (weak/strong/spectrum) or JSON file")

    p = sub.add_parser("g2", help="correlation curves")
    add_params(p)
    p.add_argument("--first", choices=("sigma-", "sigma+"), default="sigma-")
    p.add_argument("--second", choices=("sigma-", "sigma+", "both"),
                   default="both")
    p.add_argument("--total", action="store_true",
                   help="polarization-blind g2 instead of conditioned")
    p.add_argument("--t-max", type=parse_time, default=1000e-9)
    p.add_argument("--dt", type=parse_time, default=0.5e-9)
    p.add_argument("--eps-init", type=float, default=0.0)
    p.add_argument("--eps-minus", type=float, default=0.0)
    p.add_argument("--eps-plus", type=float, default=0.0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_g2)

    p = sub.add_parser("spectrum", help="excitation spectrum")
    add_params(p)
    p.add_argument("--lo", type=parse_freq, default=-TWO_PI * 40e6)
    p.add_argument("--hi", type=parse_freq, default=TWO_PI * 40e6)
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--background", type=float, default=0.0)
    p.add_argument("--dips", action="store_true",
                   help="also report dark-resonance dip positions")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("purity", help="pair purity metrics")
    add_params(p)
    p.add_argument("--t-window", type=parse_time, default=24e-9)
    p.add_argument("--t-max", type=parse_time, default=1000e-9)
    p.add_argument("--dt", type=parse_time, default=0.5e-9)
    p.add_argument("-o", "--output",
                   help="write the purity-versus-window curve")
    p.set_defaults(func=cmd_purity)

    p = sub.add_parser("simulate", help="Monte Carlo click streams")
    add_params(p)
    p.add_argument("--duration", type=parse_time, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-events", type=int, default=None)
    p.add_argument("--detect", type=float, default=None, metavar="EFFICIENCY",
                   help="split through two sigma analyzers; writes "
                        "OUT-1/OUT-2 instead of the raw stream")
    p.add_argument("--crosstalk", type=float, default=0.0)
    p.add_argument("--dark-rate", type=float, default=0.0,
                   help="dark counts per second per arm")
    p.add_argument("-o", "--output", required=True,
                   help=".clk binary or .csv text")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("correlate", help="histogram recorded streams")
    p.add_argument("stream_a")
    p.add_argument("stream_b", nargs="?", default=None,
                   help="omit to autocorrelate stream_a")
    p.add_argument("--bin", type=parse_time_ps, default=1000,
                   help="bin width (time with unit)")
    p.add_argument("--window", type=parse_time_ps, default=2_000_000,
                   help="correlation window (time with unit)")
    p.add_argument("--pol-a", choices=("sigma-", "pi", "sigma+"))
    p.add_argument("--pol-b", choices=("sigma-", "pi", "sigma+"))
    p.add_argument("--wavelength", choices=("397", "866"))
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("fit", help="parameter estimation")
    p.add_argument("mode", choices=("spectrum", "g2"))
    p.add_argument("data", nargs="+", help="CSV data file(s)")
    add_params(p)
    p.add_argument("--free", required=True,
                   help="comma-separated free parameter names, e.g. "
                        "omega_866,b_field,scale")
    p.add_argument("--kinds", default="total",
                   help="per-file dataset kinds for g2 fits, e.g. "
                        "'sigma-|sigma-,sigma-|sigma+'")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--background", type=float, default=0.0)
    p.add_argument("--eps-init", type=float, default=0.0)
    p.add_argument("--eps-minus", type=float, default=0.0)
    p.add_argument("--eps-plus", type=float, default=0.0)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--maxfev", type=int, default=2000)
    p.add_argument("--save-params", help="write fitted parameters as JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("selftest", help="internal consistency battery")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:      # argparse --help
        return int(exc.code or 0)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, StreamFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
