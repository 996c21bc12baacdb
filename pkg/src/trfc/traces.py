"""CSV trace schema and the single trace -> estimate path.

Simulated logs and field recordings use the same trace schema, so both
flow through :func:`estimate_trace`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from trfc.errors import FitError, SchemaError
from trfc.estimator import (
    BinStats,
    EstimatorSettings,
    SlipForceSample,
    TrfcEstimate,
    bin_statistics,
    estimate_series,
    run_observation,
)
from trfc.tire_model import slip_ratio
from trfc.vehicle_dynamics import VehicleParams, axle_loads, drag_force

TRACE_FIELDS = (
    "time_s",
    "wheel_speed_front_rad_s",
    "wheel_speed_rear_rad_s",
    "vehicle_speed_m_s",
    "longitudinal_accel_m_s2",
)
ESTIMATE_FIELDS = ("time_s", "slip_bin", "peak_trfc", "fitted_C", "fitted_D", "accel_context")
BIN_FIELDS = ("bin_index", "count", "mean", "std", "mse", "accel_context")
OBSERVATION_FIELDS = ("mean", "std", "count")
PLOT_FIELDS = ("time_s", "x_P", "x_ego", "x_F", "v_P", "v_ego", "v_F", "a_ego")


@dataclass(frozen=True)
class TraceRecord:
    time_s: float
    wheel_speed_front_rad_s: float
    wheel_speed_rear_rad_s: float
    vehicle_speed_m_s: float
    longitudinal_accel_m_s2: float


@dataclass
class TraceEstimation:
    samples: list[SlipForceSample]
    estimates: list[TrfcEstimate]
    bins: list[BinStats]
    observation: tuple[float, float, int] | None = None
    warnings: list[str] = field(default_factory=list)


def _fmt(value) -> str:
    # repr round-trips floats exactly, which keeps file-based runs bit-identical
    return repr(float(value)) if isinstance(value, float) else str(value)


def write_csv(path: Path | str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _read_rows(path: Path | str, expected: Sequence[str] | None) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: file is empty (no header row)") from None
        rows = [row for row in reader if row]
    if expected is not None:
        missing = [c for c in expected if c not in header]
        extra = [c for c in header if c not in expected]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        if extra:
            raise SchemaError(f"{path}: unexpected column(s) {', '.join(extra)}")
    return header, rows


def _parse_float(text: str, path, row_number: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise SchemaError(f"{path}: row {row_number}: column {column} is not a number: {text!r}") from None
    return value


def read_trace(path: Path | str) -> list[TraceRecord]:
    """Parse a trace CSV, enforcing the exact header and increasing time."""
    header, rows = _read_rows(path, TRACE_FIELDS)
    records = []
    prev_time = -math.inf
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {i}: expected {len(header)} fields, got {len(row)}")
        values = {}
        for name, text in zip(header, row):
            v = _parse_float(text, path, i, name)
            if not math.isfinite(v):
                raise SchemaError(f"{path}: row {i}: column {name} is not finite")
            values[name] = v
        if values["time_s"] <= prev_time:
            raise SchemaError(f"{path}: row {i}: time_s not strictly increasing")
        prev_time = values["time_s"]
        records.append(TraceRecord(**values))
    if not records:
        raise SchemaError(f"{path}: trace has a valid header but zero rows")
    return records


def write_trace(path: Path | str, records: Iterable[TraceRecord]) -> None:
    write_csv(path, TRACE_FIELDS, ([getattr(r, f) for f in TRACE_FIELDS] for r in records))


def read_table(path: Path | str, required: Sequence[str]) -> list[dict[str, float]]:
    """Rows of a numeric CSV holding at least the ``required`` columns."""
    header, rows = _read_rows(path, None)
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
    table = []
    for i, row in enumerate(rows, start=2):
        table.append({name: _parse_float(text, path, i, name) if text != "" else math.nan
                      for name, text in zip(header, row)})
    return table


def samples_from_trace(
    records: Sequence[TraceRecord],
    vehicle: VehicleParams,
    epsilon: float = 0.1,
    slope_rad: float = 0.0,
) -> list[SlipForceSample]:
    """Slip ratio and normalised longitudinal force at every trace row.

    Force is backed out of the measured acceleration (tires carry inertia,
    drag and grade), normalised by the total normal load; the slip is the
    load-weighted mean of the front and rear slip ratios.
    """
    samples = []
    grade = vehicle.mass * vehicle.gravity * math.sin(slope_rad)
    for r in records:
        v = r.vehicle_speed_m_s
        kf = slip_ratio(r.wheel_speed_front_rad_s, vehicle.rolling_radius, v, epsilon)
        kr = slip_ratio(r.wheel_speed_rear_rad_s, vehicle.rolling_radius, v, epsilon)
        loads = axle_loads(vehicle, r.longitudinal_accel_m_s2)
        total = loads.front_per_wheel + loads.rear_per_wheel
        kappa = (loads.front_per_wheel * kf + loads.rear_per_wheel * kr) / total
        tire_force = vehicle.mass * r.longitudinal_accel_m_s2 + drag_force(vehicle, v) + grade
        mu = tire_force / (2.0 * total)
        samples.append(SlipForceSample(r.time_s, kappa, mu, r.longitudinal_accel_m_s2))
    return samples


def estimate_trace(
    records: Sequence[TraceRecord],
    vehicle: VehicleParams,
    settings: EstimatorSettings,
    slope_rad: float = 0.0,
    reference_peak: float = math.nan,
) -> TraceEstimation:
    samples = samples_from_trace(records, vehicle, settings.epsilon, slope_rad)
    estimates = estimate_series(samples, settings.fixed_B, settings.bounds_C, settings.bounds_D,
                                settings.window)
    result = TraceEstimation(samples, estimates, bin_statistics(estimates, reference_peak))
    if not estimates:
        result.warnings.append("insufficient excitation: no sample reached |slip| >= 0.01")
    try:
        result.observation = run_observation(estimates, settings.min_observation_slip)
    except FitError as exc:
        result.warnings.append(str(exc))
    return result


def estimate_rows(estimates: Iterable[TrfcEstimate]):
    return ([e.time, e.slip_bin_index, e.peak_trfc, e.fitted_C, e.fitted_D, e.accel_context]
            for e in estimates)


def bin_rows(bins: Iterable[BinStats]):
    return ([b.bin_index, b.count, b.mean, b.std, b.mse_vs_reference, b.accel_context] for b in bins)
