"""Closed-loop worst-case car-following simulation.

Three vehicles in one lane: a preceding vehicle braking at the controller's
assumed worst case, the ego under :class:`HighSlipController`, and an IDM
follower. The ego is driven through the tire model: each commanded
acceleration is turned into a wheel slip on the rising branch of the
ground-truth force curve and integrated by :mod:`trfc.vehicle_dynamics`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from trfc.controller import (
    ControllerConfig,
    HighSlipController,
    IdmParams,
    Kinematics,
    ScenarioState,
    idm_acceleration,
    nominal_acceleration,
)
from trfc.errors import ConvergenceError, FitError, InvalidParameterError
from trfc.estimator import (
    ErrorModel,
    EstimatorSettings,
    LocationEstimate,
    aggregate_location,
    fit_error_model,
    fit_point,
)
from trfc.tire_model import TireParams, force_simplified, invert_rising_branch
from trfc.traces import TraceEstimation, TraceRecord, estimate_trace
from trfc.vehicle_dynamics import VehicleParams, VehicleState, drag_force, step, wheel_speed_for_slip

logger = logging.getLogger(__name__)

RNG_NAME = "PCG64"

# Offline characterisation of the estimator (see characterize_error), seed 0.
DEFAULT_ERROR_MODEL = ErrorModel(amplitude=0.11, width=4.45, floor=0.0)


def default_initial_state() -> ScenarioState:
    return ScenarioState(
        ego=Kinematics(0.0, 20.0),
        preceding=Kinematics(35.0, 20.0),
        following=Kinematics(-35.0, 20.0),
    )


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one closed-loop run depends on.

    ``excitation=False`` replaces the high-slip planner with plain IDM
    following, the baseline the excitation is compared against.
    """

    ground_truth_tire: TireParams = TireParams(10.0, 2.0, 0.85)
    vehicle: VehicleParams = VehicleParams()
    controller: ControllerConfig = ControllerConfig()
    idm: IdmParams = IdmParams()
    initial: ScenarioState = field(default_factory=default_initial_state)
    error_model: ErrorModel = DEFAULT_ERROR_MODEL
    estimator: EstimatorSettings = EstimatorSettings()
    duration: float = 12.0
    sensor_noise_std: float = 0.02
    random_seed: int = 0
    slope_rad: float = 0.0
    location_id: str = "sim"
    excitation: bool = True

    def __post_init__(self) -> None:
        if not self.duration > 0.0:
            raise InvalidParameterError("duration must be positive")
        if not self.sensor_noise_std >= 0.0:
            raise InvalidParameterError("sensor_noise_std must be non-negative")
        if int(self.random_seed) != self.random_seed or self.random_seed < 0:
            raise InvalidParameterError("random_seed must be a non-negative integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.controller.dt))


@dataclass(frozen=True)
class StepRecord:
    """State at ``time`` and the ego action applied over the following step."""

    time: float
    state: ScenarioState
    commanded_accel: float
    applied_accel: float
    measured_accel: float
    slip_front: float
    slip_rear: float
    force_front: float
    force_rear: float
    force_front_clean: float
    force_rear_clean: float
    wheel_speed_front: float
    wheel_speed_rear: float


@dataclass(frozen=True)
class SimulationLog:
    records: tuple[StepRecord, ...]
    collision: bool
    collision_time: float | None
    seed: int
    rng: str = RNG_NAME
    aborted: str | None = None

    def trace(self) -> list[TraceRecord]:
        """The log in the sensor-trace schema shared with field recordings."""
        return [
            TraceRecord(r.time, r.wheel_speed_front, r.wheel_speed_rear,
                        r.state.ego.velocity, r.measured_accel)
            for r in self.records
        ]

    def plot_rows(self) -> list[list[float]]:
        return [
            [r.time, r.state.preceding.position, r.state.ego.position, r.state.following.position,
             r.state.preceding.velocity, r.state.ego.velocity, r.state.following.velocity,
             r.applied_accel]
            for r in self.records
        ]

    @property
    def max_abs_slip(self) -> float:
        return max((max(abs(r.slip_front), abs(r.slip_rear)) for r in self.records), default=0.0)

    def min_gaps(self, vehicle_length: float) -> tuple[float, float]:
        ahead = min(r.state.gaps(vehicle_length)[0] for r in self.records)
        behind = min(r.state.gaps(vehicle_length)[1] for r in self.records)
        return ahead, behind


@dataclass
class RepeatedRuns:
    logs: list[SimulationLog]
    estimations: list[TraceEstimation | None]
    observations: list[tuple[float, float, int] | None]
    errors: list[str | None]
    location: LocationEstimate | None


def slip_for_acceleration(
    tire: TireParams, vehicle: VehicleParams, velocity: float, accel: float, slope_rad: float = 0.0
) -> float:
    """Wheel slip that produces ``accel`` on a level load distribution.

    All four wheels share one slip, so the total tire force is
    ``mu * m * g`` regardless of load transfer. Demands beyond the friction
    peak saturate at the critical slip ratio.
    """
    if velocity <= 0.0 and accel <= 0.0:
        return 0.0
    resist = drag_force(vehicle, velocity) / vehicle.mass + vehicle.gravity * math.sin(slope_rad)
    return invert_rising_branch(tire, (accel + resist) / vehicle.gravity)


def _advance(position: float, velocity: float, accel: float, dt: float) -> Kinematics:
    v_next = max(velocity + accel * dt, 0.0)
    return Kinematics(position + 0.5 * (velocity + v_next) * dt, v_next)


def run_scenario(config: ScenarioConfig) -> SimulationLog:
    """Simulate one run; deterministic given ``config.random_seed``.

    The run stops at the first record whose gaps violate the safety margin
    (``collision=True``) or when the ego dynamics fail to converge
    (``aborted`` carries the diagnostic, records are kept).
    """
    cfg = config.controller
    tire = config.ground_truth_tire
    veh = config.vehicle
    eps = config.estimator.epsilon
    rng = np.random.Generator(np.random.PCG64(config.random_seed))
    controller = HighSlipController(cfg, config.error_model, config.idm)

    state = config.initial
    ego = VehicleState(state.ego.position, state.ego.velocity)
    records: list[StepRecord] = []
    collision_time = None
    aborted = None

    for k in range(config.n_steps + 1):
        t = k * cfg.dt
        if min(state.gaps(cfg.vehicle_length)) <= cfg.margin:
            collision_time = t
        if config.excitation:
            a_cmd = controller.step(state)
        else:
            a_cmd = nominal_acceleration(cfg, config.idm, state)
        kappa = slip_for_acceleration(tire, veh, ego.velocity, a_cmd, config.slope_rad)
        try:
            ego_next = step(veh, tire, ego, kappa, config.slope_rad, cfg.dt, eps)
        except ConvergenceError as exc:
            aborted = f"t={t:.3f}s: {exc}"
            logger.error("run aborted: %s", aborted)
            break

        mu = float(force_simplified(tire, kappa))
        noise = float(rng.normal(0.0, config.sensor_noise_std)) if config.sensor_noise_std > 0 else 0.0
        omega = wheel_speed_for_slip(veh, ego.velocity, kappa, eps)
        records.append(StepRecord(
            time=t, state=state, commanded_accel=a_cmd, applied_accel=ego_next.acceleration,
            measured_accel=ego_next.acceleration + noise * veh.gravity,
            slip_front=kappa, slip_rear=kappa,
            force_front=mu + noise, force_rear=mu + noise,
            force_front_clean=mu, force_rear_clean=mu,
            wheel_speed_front=omega, wheel_speed_rear=omega,
        ))
        if collision_time is not None or k == config.n_steps:
            break

        lead = state.preceding
        lead_next = _advance(lead.position, lead.velocity,
                             -cfg.preceding_max_decel if lead.velocity > 0.0 else 0.0, cfg.dt)
        fol = state.following
        a_fol, _ = idm_acceleration(config.idm, fol.velocity, fol.position, state.ego.velocity,
                                    state.ego.position, cfg.vehicle_length, cfg.follower_max_decel)
        fol_next = _advance(fol.position, fol.velocity, max(a_fol, -cfg.follower_max_decel), cfg.dt)
        ego = ego_next
        state = ScenarioState(Kinematics(ego.position, ego.velocity), lead_next, fol_next)

    return SimulationLog(tuple(records), collision_time is not None, collision_time,
                         config.random_seed, RNG_NAME, aborted)


def estimate_log(config: ScenarioConfig, log: SimulationLog) -> TraceEstimation:
    """Run the trace estimation path on a simulated log."""
    return estimate_trace(log.trace(), config.vehicle, config.estimator, config.slope_rad,
                          reference_peak=config.ground_truth_tire.D)


def run_repeated(config: ScenarioConfig, n_runs: int, location_id: str | None = None) -> RepeatedRuns:
    """``n_runs`` independent runs with seeds ``random_seed + i``, aggregated.

    A run that aborts, collides or yields no observation is reported in
    ``errors`` and left out of the aggregate; the batch continues.
    """
    if int(n_runs) != n_runs or n_runs < 1:
        raise InvalidParameterError("n_runs must be an integer >= 1")
    loc = config.location_id if location_id is None else location_id
    out = RepeatedRuns([], [], [], [], None)
    for i in range(n_runs):
        run_cfg = replace(config, random_seed=config.random_seed + i)
        log = run_scenario(run_cfg)
        out.logs.append(log)
        if log.aborted is not None:
            out.estimations.append(None)
            out.observations.append(None)
            out.errors.append(f"run {i}: aborted: {log.aborted}")
            continue
        est = estimate_log(run_cfg, log)
        out.estimations.append(est)
        out.observations.append(est.observation)
        if log.collision:
            out.errors.append(f"run {i}: collision at t={log.collision_time:.3f}s")
        elif est.observation is None:
            out.errors.append(f"run {i}: no observation ({'; '.join(est.warnings)})")
        else:
            out.errors.append(None)
    usable = [(o[0], o[1]) for o, e in zip(out.observations, out.errors) if e is None and o[1] > 0.0]
    if usable:
        out.location = aggregate_location(usable, loc)
    return out


def characterize_error(
    tire: TireParams = TireParams(10.0, 2.0, 0.85),
    accel_levels: Sequence[float] = (0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0),
    noise_std: float = 0.02,
    n_trials: int = 60,
    window: int = 10,
    spread: float = 0.15,
    gravity: float = 9.81,
    seed: int = 0,
) -> tuple[list[tuple[float, float]], ErrorModel]:
    """Offline estimation error versus acceleration level.

    For every level, ``n_trials`` windows of slips around the level's
    steady-state slip (force demand jittered by ``±spread``) are fitted and
    scored by RMSE of the peak estimate against ``tire.D``.

    Returns:
        The ``(accel, rmse)`` pairs and the error model fitted to them.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    cap = tire.D * (1.0 - 1e-3)
    pairs = []
    for a in accel_levels:
        sq = []
        for _ in range(n_trials):
            mu = np.minimum(a / gravity * (1.0 + rng.uniform(-spread, spread, window)), cap)
            kappa = np.array([invert_rising_branch(tire, m) for m in mu])
            force = force_simplified(tire, kappa) + rng.normal(0.0, noise_std, window)
            try:
                sq.append((fit_point(kappa, force).peak_trfc - tire.D) ** 2)
            except FitError:
                continue
        pairs.append((float(a), math.sqrt(float(np.mean(sq)))))
    return pairs, fit_error_model(pairs)
