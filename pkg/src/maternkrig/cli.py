"""Command-line interface: fit, predict, simulate, experiment, verify.

Exit codes: 0 success, 1 verification failures, 2 invalid arguments or
inputs, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .covariance import MaternParams
from .estimation import FitConfig, FixedRhoEstimator, ProfileOptimizer
from .exceptions import (
    ConvergenceError,
    DegenerateDataError,
    ExperimentError,
    FactorizationError,
)
from .prediction import kriging_output, prediction_interval
from .selfcheck import run_all
from .simulation import (
    ExperimentConfig,
    replicate_stream,
    run_experiment,
    simulate_gp,
)


def _read_table(path: str, *, columns: int | None = None, name: str = "input") -> np.ndarray:
    """Read a numeric CSV table, tolerating comment lines and one header row."""
    try:
        with open(path) as handle:
            lines = [ln.strip() for ln in handle]
    except OSError as exc:
        raise ValueError(f"cannot read {name} file {path!r}: {exc}") from exc
    rows = []
    header_allowed = True
    for i, line in enumerate(lines):
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            if header_allowed:
                header_allowed = False
                continue  # single header row
            raise ValueError(f"{name} file {path!r}: non-numeric data on line {i + 1}")
        header_allowed = False
    if not rows:
        raise ValueError(f"{name} file {path!r} contains no data rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{name} file {path!r} has ragged rows")
    arr = np.asarray(rows, dtype=float)
    if columns is not None and arr.shape[1] != columns:
        raise ValueError(f"{name} file {path!r} must have {columns} columns, "
                         f"found {arr.shape[1]}")
    return arr


def _split_observations(table: np.ndarray, path: str) -> tuple[np.ndarray, np.ndarray]:
    """Split an observations table into locations (leading columns) and values."""
    if table.shape[1] < 2 or table.shape[1] > 4:
        raise ValueError(f"observations file {path!r} must have 2-4 columns "
                         "(coordinates then value)")
    return table[:, :-1], table[:, -1]


def _ensure_out(directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    return directory


def _write(path: str, text: str) -> None:
    with open(path, "w") as handle:
        handle.write(text)


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _fit_config_from_args(args) -> FitConfig:
    return FitConfig(nu=args.nu, rho_lower=args.rho_lower, rho_upper=args.rho_upper,
                     grid_points=args.grid_points, tolerance=args.tol)


def _cmd_fit(args) -> int:
    locations, z = _split_observations(_read_table(args.data, name="observations"),
                                       args.data)
    if args.mode == "fixed":
        if args.rho is None:
            raise ValueError("--mode fixed requires --rho")
        result = FixedRhoEstimator(locations, args.rho, args.nu).fit(z)
    else:
        taper = None
        if args.mode == "tapered":
            if args.taper_range is None:
                raise ValueError("--mode tapered requires --taper-range")
            taper = args.taper_range
        optimizer = ProfileOptimizer(locations, _fit_config_from_args(args),
                                     taper_range=taper)
        result = optimizer.fit(z)
    payload = result.to_dict()
    payload["data"] = os.path.abspath(args.data)
    out = _ensure_out(args.out)
    _write(os.path.join(out, "fit.json"),
           json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _say(args, f"n={result.n} mode={result.mode}")
    _say(args, f"rho_hat={result.rho_hat!r} sigma2_hat={result.sigma2_hat!r}")
    _say(args, f"c_hat={result.c_hat!r} ci=({result.ci_c[0]!r}, {result.ci_c[1]!r})")
    if result.at_boundary:
        _say(args, "warning: range estimate at search boundary")
    _say(args, f"wrote {os.path.join(out, 'fit.json')}")
    return 0


def _cmd_predict(args) -> int:
    locations, z = _split_observations(_read_table(args.data, name="observations"),
                                       args.data)
    targets = _read_table(args.targets, columns=locations.shape[1], name="targets")
    if args.rho is not None:
        params = MaternParams(args.sigma2, args.rho, args.nu)
    else:
        result = ProfileOptimizer(locations, _fit_config_from_args(args)).fit(z)
        params = MaternParams(result.sigma2_hat, result.rho_hat, args.nu)
        _say(args, f"fitted rho={params.rho!r} sigma2={params.sigma2!r}")
    truth = None
    if (args.true_rho is None) != (args.true_sigma2 is None):
        raise ValueError("--true-rho and --true-sigma2 must be given together")
    if args.true_rho is not None:
        truth = MaternParams(args.true_sigma2, args.true_rho, args.nu)

    outputs = kriging_output(z, locations, targets, params, truth=truth)
    if not isinstance(outputs, list):
        outputs = [outputs]
    d = locations.shape[1]
    coord_names = ["x", "y", "w"][:d]
    header = coord_names + ["z_hat", "mspe", "lower", "upper"]
    if truth is not None:
        header.append("true_mspe")
    lines = [",".join(header)]
    for item in outputs:
        lower, upper = prediction_interval(item.z_hat, item.naive_mspe, args.level)
        row = [repr(v) for v in item.target]
        row += [repr(item.z_hat), repr(item.naive_mspe), repr(lower), repr(upper)]
        if truth is not None:
            row.append(repr(item.true_mspe))
        lines.append(",".join(row))
    out = _ensure_out(args.out)
    path = os.path.join(out, "predictions.csv")
    _write(path, "\n".join(lines) + "\n")
    _say(args, f"wrote {path} ({len(outputs)} targets)")
    return 0


def _cmd_simulate(args) -> int:
    if (args.locations is None) == (args.grid_side is None):
        raise ValueError("give exactly one of --locations or --grid-side")
    if args.locations is not None:
        locations = _read_table(args.locations, name="locations")
    else:
        if args.grid_side < 1:
            raise ValueError("--grid-side must be positive")
        axis = (np.arange(args.grid_side) + 0.5) / args.grid_side
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        locations = np.column_stack([xx.ravel(), yy.ravel()])
    params = MaternParams(args.sigma2, args.rho, args.nu)
    if args.replicates < 1:
        raise ValueError("--replicates must be positive")

    out = _ensure_out(args.out)
    n = locations.shape[0]
    loc_lines = [",".join(repr(float(v)) for v in row) for row in locations]
    _write(os.path.join(out, "locations.csv"), "\n".join(loc_lines) + "\n")
    for rep in range(args.replicates):
        deviates = replicate_stream(args.seed, rep).generator().standard_normal(n)
        z = simulate_gp(locations, params, deviates)
        if args.format == "csv":
            path = os.path.join(out, f"field_{rep:05d}.csv")
            _write(path, "\n".join(repr(float(v)) for v in z) + "\n")
        else:
            path = os.path.join(out, f"field_{rep:05d}.f64")
            with open(path, "wb") as handle:
                handle.write(z.astype("<f8").tobytes())
    _say(args, f"wrote {args.replicates} field(s) of {n} sites to {out}")
    return 0


def _cmd_experiment(args) -> int:
    if args.config is not None:
        try:
            with open(args.config) as handle:
                raw = json.load(handle)
        except OSError as exc:
            raise ValueError(f"cannot read config {args.config!r}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValueError(f"config {args.config!r} is not valid JSON: {exc}") from exc
        config = ExperimentConfig.from_dict(raw)
    else:
        config = ExperimentConfig()
        _say(args, "no --config given; running the full default protocol")
    if args.seed is not None:
        config = ExperimentConfig.from_dict({**config.to_dict(), "master_seed": args.seed})

    out = _ensure_out(args.out)
    dump = os.path.join(out, "fields") if args.dump_fields else None
    report = run_experiment(config, jobs=args.jobs, field_dump=dump)
    _write(os.path.join(out, "report.csv"), report.to_csv())
    _write(os.path.join(out, "report.json"), report.to_json())
    _say(args, report.summary())
    _say(args, f"wrote {os.path.join(out, 'report.csv')} and report.json")
    return 0


def _cmd_verify(args) -> int:
    results = run_all(seed=args.seed)
    failed = 0
    for res in results:
        status = "ok" if res.passed else "FAIL"
        _say(args, f"{res.name}: {status} ({res.cases} cases, "
                   f"{len(res.failures)} failures)")
        if not res.passed:
            failed += 1
            for detail in res.failures[:5]:
                _say(args, f"  {detail}")
            if len(res.failures) > 5:
                _say(args, f"  ... {len(res.failures) - 5} more")
    if failed:
        print(f"verification FAILED ({failed} suite(s))", file=sys.stderr)
        return 1
    _say(args, "all verification suites passed")
    return 0


def _add_fit_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--nu", type=float, required=True,
                        help="Matern smoothness (held fixed)")
    parser.add_argument("--mode", choices=["mle", "fixed", "tapered"], default="mle",
                        help="how the range is obtained (default: mle)")
    parser.add_argument("--rho", type=float, default=None,
                        help="range value for --mode fixed")
    parser.add_argument("--taper-range", type=float, default=None,
                        help="taper support radius for --mode tapered")
    parser.add_argument("--rho-lower", type=float, default=1e-4,
                        help="lower search bound for the range (default: 1e-4)")
    parser.add_argument("--rho-upper", type=float, default=1e4,
                        help="upper search bound for the range (default: 1e4)")
    parser.add_argument("--grid-points", type=int, default=50,
                        help="scan points of the range search (default: 50)")
    parser.add_argument("--tol", type=float, default=1e-8,
                        help="relative tolerance of the range search (default: 1e-8)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maternkrig",
        description="Matern Gaussian-process fitting, kriging, and simulation studies")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="estimate (sigma2, rho) and the ratio c from data")
    p_fit.add_argument("--data", required=True,
                       help="CSV of observations: coordinate columns then a value column")
    _add_fit_options(p_fit)
    p_fit.add_argument("--out", default=".", help="output directory (default: .)")
    p_fit.add_argument("--quiet", action="store_true", help="suppress progress output")
    p_fit.set_defaults(func=_cmd_fit)

    p_pred = sub.add_parser("predict", help="kriging prediction at target locations")
    p_pred.add_argument("--data", required=True,
                        help="CSV of observations: coordinate columns then a value column")
    p_pred.add_argument("--targets", required=True,
                        help="CSV of target coordinates")
    _add_fit_options(p_pred)
    p_pred.add_argument("--sigma2", type=float, default=1.0,
                        help="variance used with --rho (default: 1)")
    p_pred.add_argument("--level", type=float, default=0.95,
                        help="prediction interval level (default: 0.95)")
    p_pred.add_argument("--true-rho", type=float, default=None,
                        help="true range for reporting the incurred error")
    p_pred.add_argument("--true-sigma2", type=float, default=None,
                        help="true variance for reporting the incurred error")
    p_pred.add_argument("--out", default=".", help="output directory (default: .)")
    p_pred.add_argument("--quiet", action="store_true", help="suppress progress output")
    p_pred.set_defaults(func=_cmd_predict)

    p_sim = sub.add_parser("simulate", help="draw Gaussian fields with Matern correlation")
    p_sim.add_argument("--locations", default=None,
                       help="CSV of simulation sites (coordinates only)")
    p_sim.add_argument("--grid-side", type=int, default=None,
                       help="use a side x side midpoint grid on the unit square")
    p_sim.add_argument("--nu", type=float, required=True, help="Matern smoothness")
    p_sim.add_argument("--rho", type=float, required=True, help="Matern range")
    p_sim.add_argument("--sigma2", type=float, default=1.0,
                       help="marginal variance (default: 1)")
    p_sim.add_argument("--replicates", type=int, default=1,
                       help="number of fields to draw (default: 1)")
    p_sim.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    p_sim.add_argument("--format", choices=["csv", "f64"], default="csv",
                       help="field file format (default: csv)")
    p_sim.add_argument("--out", default=".", help="output directory (default: .)")
    p_sim.add_argument("--quiet", action="store_true", help="suppress progress output")
    p_sim.set_defaults(func=_cmd_simulate)

    p_exp = sub.add_parser("experiment",
                           help="run the Monte Carlo coverage and prediction study")
    p_exp.add_argument("--config", default=None,
                       help="JSON experiment config (default: full protocol)")
    p_exp.add_argument("--seed", type=int, default=None,
                       help="override the config master seed")
    p_exp.add_argument("--jobs", type=int, default=1,
                       help="worker processes; results are identical for any value")
    p_exp.add_argument("--dump-fields", action="store_true",
                       help="also write every simulated field under OUT/fields/")
    p_exp.add_argument("--out", default=".", help="output directory (default: .)")
    p_exp.add_argument("--quiet", action="store_true", help="suppress progress output")
    p_exp.set_defaults(func=_cmd_experiment)

    p_ver = sub.add_parser("verify", help="run the internal verification suites")
    p_ver.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    p_ver.add_argument("--quiet", action="store_true", help="suppress progress output")
    p_ver.set_defaults(func=_cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FactorizationError, ConvergenceError, DegenerateDataError,
            ExperimentError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
