"""Command-line interface: ``trfc {simulate,estimate,fit-error-model,aggregate}``.

Exit status is 0 on success, 2 for invalid input (config, schema, values)
and 3 for runtime failures (solver, dynamics, collisions). Every failure
prints exactly one ``trfc: error: <CODE>: <text>`` line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Sequence

from trfc import kernels
from trfc.config import error_model_record, load_config
from trfc.errors import ConfigError, InvalidParameterError, SchemaError, TrfcError
from trfc.estimator import LocationEstimate, aggregate_location, fit_error_model
from trfc.simulator import SimulationLog, run_repeated
from trfc.traces import (
    BIN_FIELDS,
    ESTIMATE_FIELDS,
    OBSERVATION_FIELDS,
    PLOT_FIELDS,
    TraceEstimation,
    bin_rows,
    estimate_rows,
    estimate_trace,
    read_table,
    read_trace,
    write_csv,
    write_trace,
)

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3

LOG_FIELDS = (
    "time_s", "x_P", "x_ego", "x_F", "v_P", "v_ego", "v_F",
    "a_cmd", "a_applied", "a_measured", "slip_front", "slip_rear",
    "force_front", "force_rear", "force_front_clean", "force_rear_clean",
)


class CommandFailed(Exception):
    def __init__(self, code: str, message: str, status: int):
        super().__init__(message)
        self.code = code
        self.status = status


def _fail_runtime(message: str) -> CommandFailed:
    return CommandFailed("E_RUNTIME", message, EXIT_RUNTIME)


def _warn(message: str) -> None:
    print(f"trfc: warning: {message}", file=sys.stderr)


def default_config_path(name: str = "default_scenario.toml") -> Path:
    return Path(str(resources.files("trfc") / "data" / name))


def write_json(path: Path, record: dict) -> None:
    path.write_text(json.dumps(record, indent=2, allow_nan=True) + "\n")


def location_record(loc: LocationEstimate) -> dict:
    return {"location_id": loc.location_id, "mean": loc.mean, "variance": loc.variance,
            "std": loc.std, "n_observations": loc.n_observations}


def write_estimation(out: Path, result: TraceEstimation) -> None:
    write_csv(out / "estimates.csv", ESTIMATE_FIELDS, estimate_rows(result.estimates))
    write_csv(out / "bins.csv", BIN_FIELDS, bin_rows(result.bins))
    rows = [list(result.observation)] if result.observation is not None else []
    write_csv(out / "observation.csv", OBSERVATION_FIELDS, rows)


def write_log(out: Path, log: SimulationLog) -> None:
    write_trace(out / "trace.csv", log.trace())
    write_csv(out / "plot.csv", PLOT_FIELDS, log.plot_rows())
    write_csv(out / "log.csv", LOG_FIELDS, (
        [r.time, r.state.preceding.position, r.state.ego.position, r.state.following.position,
         r.state.preceding.velocity, r.state.ego.velocity, r.state.following.velocity,
         r.commanded_accel, r.applied_accel, r.measured_accel, r.slip_front, r.slip_rear,
         r.force_front, r.force_rear, r.force_front_clean, r.force_rear_clean]
        for r in log.records))


def _output_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CommandFailed("E_IO", f"cannot create output directory {out}: {exc.strerror}",
                            EXIT_VALIDATION) from None
    return out


def cmd_simulate(args: argparse.Namespace) -> int:
    loaded = load_config(args.config or default_config_path())
    config = loaded.scenario
    if args.seed is not None:
        if args.seed < 0:
            raise InvalidParameterError("--seed must be non-negative")
        config = replace(config, random_seed=args.seed)
    n_runs = args.runs if args.runs is not None else loaded.n_runs
    if n_runs < 1:
        raise InvalidParameterError("--runs must be >= 1")
    out = _output_dir(args.output_dir)

    batch = run_repeated(config, n_runs)
    runs = []
    for i, (log, est, err) in enumerate(zip(batch.logs, batch.estimations, batch.errors)):
        run_dir = out if n_runs == 1 else _output_dir(str(out / f"run_{i:03d}"))
        write_log(run_dir, log)
        if est is not None:
            write_estimation(run_dir, est)
            for w in est.warnings:
                _warn(f"run {i}: {w}")
        runs.append({"run": i, "seed": log.seed, "rng": log.rng, "collision": log.collision,
                     "collision_time_s": log.collision_time, "aborted": log.aborted,
                     "n_records": len(log.records), "max_abs_slip": log.max_abs_slip,
                     "error": err})
    summary = {"location_id": config.location_id, "n_runs": n_runs,
               "kernel_backend": kernels.backend(), "runs": runs}
    write_json(out / "runs.json", summary)
    if batch.location is not None:
        write_json(out / "location.json", location_record(batch.location))

    fatal = [r for r in runs if r["aborted"] or r["collision"]]
    if fatal:
        first = fatal[0]
        what = f"aborted: {first['aborted']}" if first["aborted"] else \
            f"collision at t={first['collision_time_s']:.3f}s"
        raise _fail_runtime(f"run {first['run']} {what}; partial outputs kept in {out}")
    if batch.location is None:
        raise _fail_runtime("no run produced an observation (insufficient excitation)")
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace) -> int:
    loaded = load_config(args.config or default_config_path("default_estimation.toml"))
    records = read_trace(args.trace)
    sc = loaded.scenario
    result = estimate_trace(records, sc.vehicle, sc.estimator, sc.slope_rad, loaded.reference_peak)
    out = _output_dir(args.output_dir)
    write_estimation(out, result)
    for w in result.warnings:
        _warn(w)
    return EXIT_OK


def _error_pair(path: str) -> tuple[float, float]:
    """Count-weighted |accel| and RMS error of one bin-statistics file."""
    rows = read_table(path, ("count", "mse", "accel_context"))
    rows = [r for r in rows if math.isfinite(r["mse"]) and math.isfinite(r["accel_context"])]
    if not rows:
        raise SchemaError(f"{path}: no row with a finite mse "
                          "(estimate with estimation.reference_peak_trfc set)")
    weight = math.fsum(r["count"] for r in rows)
    if not weight > 0.0:
        raise SchemaError(f"{path}: column count sums to zero")
    accel = math.fsum(r["count"] * abs(r["accel_context"]) for r in rows) / weight
    mse = math.fsum(r["count"] * r["mse"] for r in rows) / weight
    return accel, math.sqrt(mse)


def cmd_fit_error_model(args: argparse.Namespace) -> int:
    pairs = [_error_pair(p) for p in args.bins]
    model = fit_error_model(pairs)
    if model.is_flat:
        _warn("error data is flat in acceleration; fitted amplitude is 0")
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_json(out, error_model_record(model))
    return EXIT_OK


def cmd_aggregate(args: argparse.Namespace) -> int:
    observations = []
    for path in args.observations:
        for row_number, row in enumerate(read_table(path, ("mean", "std")), start=2):
            mean, std = row["mean"], row["std"]
            if math.isnan(std):
                _warn(f"{path}: row {row_number}: std is empty or NaN; row skipped")
                continue
            if not (std > 0.0 and math.isfinite(std) and math.isfinite(mean)):
                raise SchemaError(f"{path}: row {row_number}: column std must be positive "
                                  f"and finite, got {std}")
            observations.append((mean, std))
    if not observations:
        raise SchemaError("no usable (mean, std) rows in the inputs")
    location = aggregate_location(observations, args.location_id)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_json(out, location_record(location))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trfc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the closed-loop excitation scenario")
    p.add_argument("--config", help="scenario TOML (default: bundled default_scenario.toml)")
    p.add_argument("--seed", type=int, help="override scenario.random_seed")
    p.add_argument("--runs", type=int, help="override scenario.n_runs")
    p.add_argument("--output-dir", default=".", help="directory for the outputs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate peak friction from a recorded trace CSV")
    p.add_argument("trace", help="trace CSV (time_s, wheel speeds, speed, acceleration)")
    p.add_argument("--config", help="vehicle/estimator TOML (default: bundled default_estimation.toml)")
    p.add_argument("--output-dir", default=".", help="directory for the outputs")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("fit-error-model", help="fit the error-vs-acceleration model")
    p.add_argument("bins", nargs="+", help="bins.csv files, one per acceleration context")
    p.add_argument("-o", "--output", default="error_model.json", help="output JSON record")
    p.set_defaults(func=cmd_fit_error_model)

    p = sub.add_parser("aggregate", help="inverse-variance aggregation of observations")
    p.add_argument("observations", nargs="+", help="CSV files with mean and std columns")
    p.add_argument("--location-id", required=True)
    p.add_argument("-o", "--output", default="location.json", help="output JSON record")
    p.set_defaults(func=cmd_aggregate)
    return parser


def _one_line(text: str) -> str:
    return " ".join(str(text).split())


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="trfc: %(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CommandFailed as exc:
        code, status, message = exc.code, exc.status, str(exc)
    except ConfigError as exc:
        code, status, message = "E_CONFIG", EXIT_VALIDATION, str(exc)
    except SchemaError as exc:
        code, status, message = "E_SCHEMA", EXIT_VALIDATION, str(exc)
    except InvalidParameterError as exc:
        code, status, message = "E_VALUE", EXIT_VALIDATION, str(exc)
    except FileNotFoundError as exc:
        code, status, message = "E_IO", EXIT_VALIDATION, f"{exc.filename}: no such file"
    except TrfcError as exc:
        code, status, message = "E_RUNTIME", EXIT_RUNTIME, str(exc)
    print(f"trfc: error: {code}: {_one_line(message)}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
