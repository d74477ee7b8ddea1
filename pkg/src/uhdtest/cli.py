"""
Command-line interface.

Exit codes: 0 accept (or success), 3 reject, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import __version__
from .errors import ConfigError, DataFormatError, UHDTestError
from .fileio import read_matrix, read_vector
from .procedure import TestConfig, default_threads, run_test
from .report import RunReport, dump_document, parse_document
from .simharness import DESK_THETA, Scenario, empirical_size_power, power_curve
from .spectra import as_data_matrix, sample_covariance_spectrum, spectrum_summary
from .tuning import CalibrationResult, ThetaGrid, calibrate_delta, theta_search

EXIT_ACCEPT, EXIT_USAGE, EXIT_DATA, EXIT_REJECT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _theta_arg(text: str) -> float | str:
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None


def _delta_arg(text: str) -> float | str:
    if text in ("auto", "binomial", "gaussian"):
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, auto, binomial or gaussian, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common(p: argparse.ArgumentParser, k_default: int, theta_default, delta_default) -> None:
    p.add_argument("--seed", type=int, default=0, help="64-bit seed for all randomness")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $UHDTEST_THREADS or 1); never changes results")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--n", type=int, default=None, help="split size (default N - 5)")
    p.add_argument("--k-splits", type=int, default=k_default)
    p.add_argument("--theta", type=_theta_arg, default=theta_default, help="bandwidth multiplier or 'auto'")
    p.add_argument("--delta", type=_delta_arg, default=delta_default,
                   help="threshold value, 'auto' (Gaussian calibration), 'binomial' or 'gaussian'")
    p.add_argument("--calibration-b", type=int, default=1000, help="replicates for --delta auto")
    p.add_argument("--out", default=None, help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uhdtest", description="Two-sample covariance test for p >> n data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="run the test on two data files")
    t.add_argument("x_path")
    t.add_argument("y_path")
    _common(t, 1000, "auto", "binomial")
    t.add_argument("--calibration", default=None, help="calibration file from 'uhdtest calibrate'")

    c = sub.add_parser("calibrate", help="calibrate delta on standard Gaussian data")
    _common(c, 100, DESK_THETA, "auto")
    c.add_argument("--n1", type=int, default=80)
    c.add_argument("--n2", type=int, default=80)
    c.add_argument("--p", type=int, default=500)
    c.add_argument("--b", type=int, default=1000)

    u = sub.add_parser("tune", help="bandwidth search along a theta grid")
    u.add_argument("x_path")
    u.add_argument("y_path")
    _common(u, 1000, "auto", "binomial")
    u.add_argument("--grid", type=_float_list, default=None, help="comma-separated theta grid")
    u.add_argument("--unsmoothed", action="store_true", help="apply the stability rule to raw ratios")

    s = sub.add_parser("simulate", help="size/power sweep for a scenario file")
    s.add_argument("scenario_path")
    _common(s, 100, DESK_THETA, "auto")
    s.add_argument("--reps", type=int, default=None, help="replicates (default: scenario file, else 200)")
    s.add_argument("--power-curve", type=_float_list, default=None, metavar="EPS,...",
                   help="case III epsilon grid; emits (epsilon, power) rows")
    s.add_argument("--omit-timing", action="store_true", help="drop the wall_time column")

    e = sub.add_parser("spectra", help="scaled spectrum of one data file as JSON")
    e.add_argument("x_path")
    e.add_argument("--population", default=None, help="file of population eigenvalues for a model overlay")
    e.add_argument("--overlay-mode", choices=("semicircle", "exact"), default="semicircle")
    e.add_argument("--grid-points", type=int, default=200)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--threads", type=int, default=None)
    e.add_argument("--out", default=None)
    return parser


def _threads(args) -> int:
    t = args.threads if args.threads is not None else default_threads()
    if t < 1:
        raise UsageError("--threads must be >= 1")
    return t


def _config(args, **extra) -> TestConfig:
    try:
        return TestConfig(n=args.n, k_splits=args.k_splits, alpha=args.alpha, theta=args.theta,
                          delta=args.delta, seed=args.seed, calibration_b=args.calibration_b,
                          threads=_threads(args), **extra)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def _emit(text: str, out: str | None, append: bool = False) -> None:
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(out, "a" if append else "w", newline="") as fh:
        fh.write(text)


def _load_pair(x_path: str, y_path: str):
    X = as_data_matrix(read_matrix(x_path))
    Y = as_data_matrix(read_matrix(y_path))
    if X.p != Y.p:
        raise DataFormatError(f"column counts differ: {X.p} in {x_path}, {Y.p} in {y_path}")
    return X, Y


def write_calibration(cal: CalibrationResult) -> str:
    return dump_document("calibration", {
        "calibration": {"delta": cal.delta, "b": cal.b},
        "params": dict(cal.params),
        "samples": {"dr_samples": list(cal.dr_samples)},
        "provenance": {"version": __version__},
    })


def read_calibration(path: str) -> CalibrationResult:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc.strerror or exc}") from exc
    kind, sec = parse_document(text)
    if kind != "calibration":
        raise DataFormatError(f"{path} is a {kind!r} document, not a calibration")
    try:
        return CalibrationResult(delta=float(sec["calibration"]["delta"]), b=int(sec["calibration"]["b"]),
                                 dr_samples=tuple(sec["samples"]["dr_samples"]), params=sec["params"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"incomplete calibration file: {exc}") from exc


def cmd_test(args) -> int:
    config = _config(args)
    source = config.delta if isinstance(config.delta, str) else "explicit"
    if args.calibration:
        if not isinstance(args.delta, str) or args.delta != "binomial":
            warnings.warn("--calibration overrides --delta")
        cal = read_calibration(args.calibration)
        config = replace(config, delta="auto", calibrated_delta=cal.delta)
        source = "calibration-file"
    elif config.delta == "auto":
        source = "calibrated"
    X, Y = _load_pair(args.x_path, args.y_path)
    if args.calibration:
        _check_calibration(cal.params, config, X, Y)
    summary = run_test(X, Y, config)
    report = RunReport(
        verdict="reject" if summary.reject else "accept", dr=summary.dr, delta=summary.delta_used,
        delta_source=source, alpha=config.alpha, n_auto_reject=summary.n_auto_reject,
        n_efficient=summary.n_efficient, n_discarded=summary.n_discarded, n_votes=summary.n_votes,
        theta=summary.theta, n=summary.n, n1=X.n, n2=Y.n, p=X.p, resample_rounds=summary.resample_rounds,
        seed=config.seed, version=__version__, config=config.to_dict(),
    )
    _emit(report.to_text(), args.out)
    return EXIT_REJECT if summary.reject else EXIT_ACCEPT


def _check_calibration(params: dict, config: TestConfig, X, Y) -> None:
    expect = {"n1": X.n, "n2": Y.n, "p": X.p, "n": config.resolved_n(X.n, Y.n),
              "k_splits": config.k_splits, "alpha": config.alpha}
    if config.theta != "auto":
        expect["theta"] = float(config.theta)
    bad = [k for k, v in expect.items() if k in params and params[k] != v]
    if bad:
        warnings.warn("calibration file was made for different settings: " + ", ".join(
            f"{k}={params[k]} (run uses {expect[k]})" for k in bad))


def cmd_calibrate(args) -> int:
    if args.theta == "auto":
        raise UsageError("calibration needs a numeric --theta")
    config = _config(args)  # validates alpha, k, n
    if args.b < 1:
        raise UsageError(f"--b must be >= 1, got {args.b}")
    try:
        n = config.resolved_n(args.n1, args.n2)
    except UHDTestError as exc:
        raise UsageError(str(exc)) from exc
    cal = calibrate_delta(args.n1, args.n2, n, args.p, config.k_splits, config.alpha, args.b,
                          float(args.theta), config.seed, threads=config.threads)
    _emit(write_calibration(cal), args.out)
    return EXIT_ACCEPT


def cmd_tune(args) -> int:
    config = _config(args)
    try:
        grid = ThetaGrid(tuple(args.grid)) if args.grid else None
    except UHDTestError as exc:
        raise UsageError(str(exc)) from exc
    X, Y = _load_pair(args.x_path, args.y_path)
    from .procedure import usable_split_spectra

    n = config.resolved_n(X.n, Y.n)
    spectra, classification = usable_split_spectra(X, Y, n, config)
    search = theta_search(spectra, config, grid, classification, smoothed=not args.unsmoothed)
    _emit(dump_document("tune-report", {
        "result": {"theta": search.theta, "index": search.index, "fallback": search.fallback,
                   "smoothed": not args.unsmoothed},
        "curve": {"grid": list(search.grid.values), "dr": list(search.dr),
                  "dr_smooth": list(search.dr_smooth)},
        "config": config.to_dict(),
        "provenance": {"version": __version__, "seed": config.seed},
    }), args.out)
    return EXIT_ACCEPT


_SCENARIO_KEYS = {"case", "p", "n1", "n2", "dist", "hypothesis", "theta", "epsilon", "seed", "reps"}


def read_scenario(path: str) -> tuple[Scenario, int | None]:
    """Flat ``key = value`` (or ``key: value``) file; '#' starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc.strerror or exc}") from exc
    kv: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":"
        key, found, value = line.partition(sep)
        key = key.strip().lower()
        if not found or key not in _SCENARIO_KEYS:
            raise DataFormatError(f"{path}:{lineno}: unrecognised line {raw!r}")
        kv[key] = value.strip()
    try:
        case = kv["case"].upper()
        param = None
        if "theta" in kv and "epsilon" in kv:
            raise DataFormatError("give either theta (case II) or epsilon (case III), not both")
        if "theta" in kv or "epsilon" in kv:
            param = float(kv.get("theta", kv.get("epsilon")))
        scenario = Scenario(case_id=case, p=int(kv.get("p", 500)), n1=int(kv.get("n1", 80)),
                            n2=int(kv.get("n2", 80)), dist=kv.get("dist", "gaussian").lower(),
                            hypothesis=kv.get("hypothesis", "null").lower(), param=param,
                            scenario_seed=int(kv.get("seed", 0)))
        reps = int(kv["reps"]) if "reps" in kv else None
    except KeyError as exc:
        raise DataFormatError(f"{path}: missing key {exc}") from exc
    except (ValueError, ConfigError) as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    return scenario, reps


def _csv_text(header: list[str], rows: list[list], with_header: bool) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if with_header:
        w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else ("" if v is None else v) for v in row])
    return buf.getvalue()


def cmd_simulate(args) -> int:
    config = _config(args)
    scenario, file_reps = read_scenario(args.scenario_path)
    reps = args.reps if args.reps is not None else (file_reps or 200)
    if reps < 1:
        raise UsageError("--reps must be >= 1")
    if config.delta == "auto" and config.theta == "auto":
        raise UsageError("a calibrated delta in a sweep needs a numeric --theta")
    fresh = args.out is None or not os.path.exists(args.out) or os.path.getsize(args.out) == 0
    if args.power_curve is not None:
        if scenario.case_id != "III":
            raise DataFormatError("power curves need a case III scenario")
        try:
            results = power_curve(scenario, args.power_curve, reps, config)
        except ConfigError as exc:
            raise UsageError(str(exc)) from exc
        rows = [[r.scenario.param if r.scenario.param is not None else 0.0, r.rejection_rate] for r in results]
        _emit(_csv_text(["epsilon", "power"], rows, fresh), args.out, append=True)
        return EXIT_ACCEPT
    res = empirical_size_power(scenario, reps, config)
    row = res.row()
    if args.omit_timing:
        row.pop("wall_time")
    _emit(_csv_text(list(row), [list(row.values())], fresh), args.out, append=True)
    return EXIT_ACCEPT


def cmd_spectra(args) -> int:
    X = as_data_matrix(read_matrix(args.x_path))
    spec = sample_covariance_spectrum(X)
    doc = {"n": X.n, "p": X.p, "eigenvalues": [float(v) for v in spec.eigenvalues],
           "summary": spectrum_summary(spec).to_dict()}
    if args.population:
        from .rmtlab import PopulationSpectrum, classical_locations, retained_model

        pop_eigs = read_vector(args.population)
        if pop_eigs.size != X.p:
            raise DataFormatError(f"population file has {pop_eigs.size} eigenvalues, data has p = {X.p}")
        try:
            pop = PopulationSpectrum(pop_eigs)
        except UHDTestError as exc:
            raise DataFormatError(str(exc)) from exc
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = retained_model(pop, X.n, mode=args.overlay_mode)
        xs, dens = model.density_grid(args.grid_points)
        doc["model"] = {"mode": model.mode, "phi": model.phi, "center": model.center,
                        "median": classical_locations(model, 2).median,
                        "support": list(model.support), "x": xs.tolist(), "density": dens.tolist()}
    _emit(json.dumps(doc, indent=2, allow_nan=True) + "\n", args.out)
    return EXIT_ACCEPT


COMMANDS = {"test": cmd_test, "calibrate": cmd_calibrate, "tune": cmd_tune,
            "simulate": cmd_simulate, "spectra": cmd_spectra}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return int(exc.code or 0)
    warnings.simplefilter("default")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"uhdtest: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UHDTestError as exc:
        print(f"uhdtest: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"uhdtest: I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
