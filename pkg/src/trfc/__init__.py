"""Peak tire-road friction estimation with high-slip excitation control."""

from trfc.controller import (
    ControllerConfig,
    HighSlipController,
    IdmParams,
    Kinematics,
    PlannedTrajectory,
    ScenarioState,
    gate_and_step,
    plan,
)
from trfc.errors import (
    BranchOutOfDomainError,
    ConfigError,
    ConvergenceError,
    FitError,
    InvalidParameterError,
    NoInteriorPeakError,
    SchemaError,
    TrfcError,
)
from trfc.estimator import (
    BinStats,
    ErrorModel,
    EstimatorSettings,
    FitResult,
    LocationEstimate,
    SlipForceSample,
    TrfcEstimate,
    aggregate_location,
    assign_bin,
    bin_statistics,
    estimate_series,
    evaluate_error,
    fit_error_model,
    fit_point,
)
from trfc.simulator import ScenarioConfig, SimulationLog, run_repeated, run_scenario
from trfc.tire_model import (
    TireParams,
    critical_slip_ratio,
    force_derivative,
    force_full,
    force_simplified,
    peak_trfc,
    slip_ratio,
)
from trfc.vehicle_dynamics import VehicleParams, VehicleState, axle_loads, net_acceleration, step

__version__ = "0.1.0"

__all__ = [
    "BinStats", "BranchOutOfDomainError", "ConfigError", "ControllerConfig", "ConvergenceError",
    "ErrorModel", "EstimatorSettings", "FitError", "FitResult", "HighSlipController", "IdmParams",
    "InvalidParameterError", "Kinematics", "LocationEstimate", "NoInteriorPeakError",
    "PlannedTrajectory", "ScenarioConfig", "ScenarioState", "SchemaError", "SimulationLog",
    "SlipForceSample", "TireParams", "TrfcError", "TrfcEstimate", "VehicleParams", "VehicleState",
    "aggregate_location", "assign_bin", "axle_loads", "bin_statistics", "critical_slip_ratio",
    "estimate_series", "evaluate_error", "fit_error_model", "fit_point", "force_derivative",
    "force_full", "force_simplified", "gate_and_step", "net_acceleration", "peak_trfc", "plan",
    "run_repeated", "run_scenario", "slip_ratio", "step",
]
