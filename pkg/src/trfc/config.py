"""TOML scenario/estimation configuration with fail-closed validation.

Keys carry their units in the name. Unknown sections or keys are errors,
and every error is traced back to a line of the file where possible.
"""

from __future__ import annotations

import json
import math
import re
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

from trfc.controller import Kinematics, ScenarioState
from trfc.errors import ConfigError, InvalidParameterError
from trfc.estimator import ErrorModel, EstimatorSettings
from trfc.simulator import ScenarioConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

FLOAT, INT, STR, BOOL = "float", "int", "str", "bool"

# section -> {toml key: (target field, kind)}
SCHEMA: dict[str, dict[str, tuple[str, str]]] = {
    "scenario": {
        "duration_s": ("duration", FLOAT),
        "sensor_noise_std": ("sensor_noise_std", FLOAT),
        "random_seed": ("random_seed", INT),
        "slope_rad": ("slope_rad", FLOAT),
        "location_id": ("location_id", STR),
        "excitation": ("excitation", BOOL),
        "n_runs": ("n_runs", INT),
    },
    "tire": {"B": ("B", FLOAT), "C": ("C", FLOAT), "D": ("D", FLOAT)},
    "vehicle": {
        "mass_kg": ("mass", FLOAT),
        "cg_to_front_axle_m": ("a", FLOAT),
        "cg_to_rear_axle_m": ("b", FLOAT),
        "cg_height_m": ("cg_height", FLOAT),
        "air_density_kg_m3": ("air_density", FLOAT),
        "drag_coefficient": ("drag_coefficient", FLOAT),
        "frontal_area_m2": ("frontal_area", FLOAT),
        "rolling_radius_m": ("rolling_radius", FLOAT),
        "gravity_m_s2": ("gravity", FLOAT),
    },
    "controller": {
        "horizon_steps": ("horizon_steps", INT),
        "dt_s": ("dt", FLOAT),
        "a_min_m_s2": ("a_min", FLOAT),
        "a_max_m_s2": ("a_max", FLOAT),
        "preceding_max_decel_m_s2": ("preceding_max_decel", FLOAT),
        "follower_max_decel_m_s2": ("follower_max_decel", FLOAT),
        "oscillation_weight": ("oscillation_weight", FLOAT),
        "oscillation_sign": ("oscillation_sign", FLOAT),
        "v_threshold_m_s": ("v_threshold", FLOAT),
        "margin_m": ("margin", FLOAT),
        "vehicle_length_m": ("vehicle_length", FLOAT),
        "softplus_sharpness": ("softplus_sharpness", FLOAT),
        "n_random_starts": ("n_random_starts", INT),
        "seed": ("seed", INT),
    },
    "idm": {
        "desired_speed_m_s": ("desired_speed", FLOAT),
        "time_headway_s": ("time_headway", FLOAT),
        "min_gap_m": ("min_gap", FLOAT),
        "comfort_accel_m_s2": ("comfort_accel", FLOAT),
        "comfort_decel_m_s2": ("comfort_decel", FLOAT),
        "accel_exponent": ("accel_exponent", FLOAT),
    },
    "initial": {
        "ego_position_m": ("ego_position", FLOAT),
        "ego_velocity_m_s": ("ego_velocity", FLOAT),
        "preceding_position_m": ("preceding_position", FLOAT),
        "preceding_velocity_m_s": ("preceding_velocity", FLOAT),
        "following_position_m": ("following_position", FLOAT),
        "following_velocity_m_s": ("following_velocity", FLOAT),
    },
    "error_model": {
        "amplitude": ("amplitude", FLOAT),
        "width_m_s2": ("width", FLOAT),
        "floor": ("floor", FLOAT),
        "file": ("file", STR),
    },
    "estimator": {
        "fixed_B": ("fixed_B", FLOAT),
        "C_min": ("C_min", FLOAT),
        "C_max": ("C_max", FLOAT),
        "D_min": ("D_min", FLOAT),
        "D_max": ("D_max", FLOAT),
        "window_samples": ("window", INT),
        "epsilon_m_s": ("epsilon", FLOAT),
        "min_observation_slip": ("min_observation_slip", FLOAT),
    },
    "estimation": {
        "reference_peak_trfc": ("reference_peak", FLOAT),
    },
}

ERROR_MODEL_KEYS = ("amplitude", "width_m_s2", "floor")


@dataclass(frozen=True)
class LoadedConfig:
    scenario: ScenarioConfig
    n_runs: int = 1
    reference_peak: float = math.nan
    path: str = ""


class _Locator:
    """Maps ``(section, key)`` to the line it is defined on."""

    _header = re.compile(r"^\s*\[\s*([A-Za-z0-9_.-]+)\s*\]")
    _key = re.compile(r"^\s*([A-Za-z0-9_-]+)\s*=")

    def __init__(self, text: str):
        self.lines: dict[tuple[str, str | None], int] = {}
        section = ""
        for number, line in enumerate(text.splitlines(), start=1):
            if m := self._header.match(line):
                section = m.group(1)
                self.lines.setdefault((section, None), number)
            elif m := self._key.match(line):
                self.lines.setdefault((section, m.group(1)), number)

    def __call__(self, section: str, key: str | None = None) -> int | None:
        return self.lines.get((section, key)) or self.lines.get((section, None))


def _coerce(value: Any, kind: str, where: str) -> Any:
    if kind == BOOL:
        if isinstance(value, bool):
            return value
        raise InvalidParameterError(f"{where} must be true or false")
    if kind == STR:
        if isinstance(value, str):
            return value
        raise InvalidParameterError(f"{where} must be a string")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidParameterError(f"{where} must be a number")
    if kind == INT:
        if isinstance(value, float) and not value.is_integer():
            raise InvalidParameterError(f"{where} must be an integer")
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        raise InvalidParameterError(f"{where} must be finite")
    return value


def _parse(text: str, path: str) -> tuple[dict[str, dict[str, Any]], _Locator]:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        line = int(m.group(1)) if m else max(len(text.splitlines()), 1)
        raise ConfigError(f"malformed TOML: {exc}", path, line) from None
    locate = _Locator(text)
    values: dict[str, dict[str, Any]] = {}
    for section, table in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", path, locate(section))
        if not isinstance(table, dict):
            raise ConfigError(f"{section} must be a table", path, locate("", section))
        values[section] = {}
        for key, value in table.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}", path, locate(section, key))
            field_name, kind = SCHEMA[section][key]
            try:
                values[section][field_name] = _coerce(value, kind, f"{section}.{key}")
            except InvalidParameterError as exc:
                raise ConfigError(str(exc), path, locate(section, key)) from None
    return values, locate


def _build(section: str, factory, locate: _Locator, path: str):
    """Run ``factory``; attribute a validation failure to the offending key."""
    try:
        return factory()
    except InvalidParameterError as exc:
        message = str(exc)
        hits = [key for key, (field_name, _) in SCHEMA[section].items()
                if re.search(rf"\b{re.escape(field_name)}\b", message)]
        present = [k for k in hits if (section, k) in locate.lines]
        key = max(present or hits, key=len) if hits else None
        label = f"{section}.{key}" if key else f"[{section}]"
        raise ConfigError(f"{label}: {message}", path, locate(section, key)) from None


def read_error_model(path: Path | str) -> ErrorModel:
    """Load an error-model record written by ``trfc fit-error-model``."""
    try:
        record = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read error model: {exc}", str(path)) from None
    if not isinstance(record, dict):
        raise ConfigError("error-model record must be a JSON object", str(path))
    missing = [k for k in ERROR_MODEL_KEYS if k not in record]
    if missing:
        raise ConfigError(f"error-model record lacks {', '.join(missing)}", str(path))
    try:
        return ErrorModel(*(_coerce(record[k], FLOAT, k) for k in ERROR_MODEL_KEYS))
    except InvalidParameterError as exc:
        raise ConfigError(str(exc), str(path)) from None


def error_model_record(model: ErrorModel) -> dict[str, float]:
    return {"amplitude": model.amplitude, "width_m_s2": model.width, "floor": model.floor}


def load_config(path: Path | str | None = None, text: str | None = None) -> LoadedConfig:
    """Parse a configuration; omitted keys keep their documented defaults.

    Raises:
        ConfigError: syntax errors, unknown keys, wrong types or values
            outside their domain, with the line they came from.
    """
    path_str = "" if path is None else str(path)
    if text is None:
        if path is None:
            text = ""
        else:
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc.strerror}", path_str) from None
    values, locate = _parse(text, path_str)
    get = lambda section: values.get(section, {})  # noqa: E731
    base = ScenarioConfig()

    tire = _build("tire", lambda: replace(base.ground_truth_tire, **get("tire")), locate, path_str)
    vehicle = _build("vehicle", lambda: replace(base.vehicle, **get("vehicle")), locate, path_str)
    controller = _build("controller", lambda: replace(base.controller, **get("controller")),
                        locate, path_str)
    idm = _build("idm", lambda: replace(base.idm, **get("idm")), locate, path_str)

    init = get("initial")
    s0 = base.initial

    def initial():
        role = lambda name, k: Kinematics(  # noqa: E731
            init.get(f"{name}_position", k.position), init.get(f"{name}_velocity", k.velocity))
        return ScenarioState(role("ego", s0.ego), role("preceding", s0.preceding),
                             role("following", s0.following))

    initial_state = _build("initial", initial, locate, path_str)

    em = dict(get("error_model"))
    if "file" in em:
        if len(em) > 1:
            raise ConfigError("error_model.file excludes inline error-model values", path_str,
                              locate("error_model", "file"))
        model_path = Path(em["file"])
        if not model_path.is_absolute() and path is not None:
            model_path = Path(path).parent / model_path
        error_model = read_error_model(model_path)
    else:
        error_model = _build("error_model", lambda: replace(base.error_model, **em), locate, path_str)

    est = get("estimator")
    d = base.estimator

    def estimator():
        for lo, hi, limits in (("C_min", "C_max", (1.5, 3.0)), ("D_min", "D_max", (0.0, 1.5))):
            a = est.get(lo, getattr(d, f"bounds_{lo[0]}")[0])
            b = est.get(hi, getattr(d, f"bounds_{lo[0]}")[1])
            if not (limits[0] <= a < b <= limits[1]) or (lo == "D_min" and a == 0.0):
                raise InvalidParameterError(
                    f"{lo}={a}, {hi}={b} must satisfy {limits[0]} <= {lo} < {hi} <= {limits[1]}"
                    + (" with D_min > 0" if lo == "D_min" else ""))
        return EstimatorSettings(
            fixed_B=est.get("fixed_B", d.fixed_B),
            bounds_C=(est.get("C_min", d.bounds_C[0]), est.get("C_max", d.bounds_C[1])),
            bounds_D=(est.get("D_min", d.bounds_D[0]), est.get("D_max", d.bounds_D[1])),
            window=est.get("window", d.window),
            epsilon=est.get("epsilon", d.epsilon),
            min_observation_slip=est.get("min_observation_slip", d.min_observation_slip),
        )

    settings = _build("estimator", estimator, locate, path_str)

    sc = dict(get("scenario"))
    n_runs = sc.pop("n_runs", 1)
    if n_runs < 1:
        raise ConfigError("scenario.n_runs must be >= 1", path_str, locate("scenario", "n_runs"))
    scenario = _build("scenario", lambda: replace(
        base, ground_truth_tire=tire, vehicle=vehicle, controller=controller, idm=idm,
        initial=initial_state, error_model=error_model, estimator=settings, **sc,
    ), locate, path_str)

    if "reference_peak" in get("estimation"):
        reference = get("estimation")["reference_peak"]
    elif "tire" in values:
        reference = tire.D
    else:
        reference = math.nan
    return LoadedConfig(scenario, n_runs, reference, path_str)
