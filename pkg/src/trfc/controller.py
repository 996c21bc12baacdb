"""High-slip excitation controller for worst-case car following.

Plans an ego acceleration sequence that minimises
``sum_t e(a_t) - lambda (a_t - a_{t-1})^2`` over a finite horizon while the
preceding vehicle brakes at its maximum deceleration, the follower (an IDM
driver) is never forced past its braking limit, and the three vehicles keep
their order with a safety margin.

Positions are front-bumper coordinates; a gap is ``x_lead - x_follow - length``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from trfc import kernels as K
from trfc.errors import InvalidParameterError
from trfc.estimator import ErrorModel

FEASIBILITY_TOL = 1e-6
PENALTY_SCHEDULE = (1e1, 1e3, 1e5)
DESCENT_ITERATIONS = 300
BISECTION_STEPS = 30
POLISH_SWEEPS = 3
GAP_BUFFER = 0.1
IDM_BUFFER = 0.05


@dataclass(frozen=True)
class ControllerConfig:
    """Planner settings.

    Args:
        horizon_steps: Number of planned accelerations T.
        dt: Discretisation step [s].
        a_min, a_max: Ego acceleration bounds [m/s^2]; a_min < 0 < a_max.
        preceding_max_decel: Worst-case braking of the preceding vehicle [m/s^2].
        follower_max_decel: Braking limit the follower may be pushed to [m/s^2].
        oscillation_weight: Weight lambda on (a_t - a_{t-1})^2.
        oscillation_sign: +1 rewards oscillation (the excitation objective),
            -1 turns the term into a smoothing penalty.
        v_threshold: Excitation is planned only above this ego speed [m/s].
        prev_accel: Acceleration applied just before the horizon [m/s^2].
        margin: Minimum bumper-to-bumper gap counted as safe [m].
        vehicle_length: Length of every vehicle [m].
        softplus_sharpness: Smoothing of the velocity clamp during descent.
        n_random_starts: Extra seeded random starts for the descent.
    """

    horizon_steps: int = 30
    dt: float = 0.1
    a_min: float = -8.0
    a_max: float = 8.5
    preceding_max_decel: float = 6.0
    follower_max_decel: float = 8.0
    oscillation_weight: float = 1e-3
    oscillation_sign: float = 1.0
    v_threshold: float = 2.0
    prev_accel: float = 0.0
    margin: float = 2.0
    vehicle_length: float = 5.0
    softplus_sharpness: float = 100.0
    n_random_starts: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.horizon_steps) != self.horizon_steps or self.horizon_steps < 1:
            raise InvalidParameterError("horizon_steps must be an integer >= 1")
        if not self.dt > 0.0:
            raise InvalidParameterError("dt must be positive")
        if not self.a_min < 0.0:
            raise InvalidParameterError("a_min must be negative")
        if not self.a_max > 0.0:
            raise InvalidParameterError("a_max must be positive")
        if not self.preceding_max_decel > 0.0:
            raise InvalidParameterError("preceding_max_decel must be positive")
        if not self.follower_max_decel > 0.0:
            raise InvalidParameterError("follower_max_decel must be positive")
        if not self.oscillation_weight > 0.0:
            raise InvalidParameterError("oscillation_weight (lambda) must be positive")
        if self.oscillation_sign not in (1.0, -1.0):
            raise InvalidParameterError("oscillation_sign must be +1 or -1")
        if not self.margin >= 0.0 or not self.vehicle_length >= 0.0:
            raise InvalidParameterError("margin and vehicle_length must be non-negative")


@dataclass(frozen=True)
class IdmParams:
    desired_speed: float = 25.0
    time_headway: float = 1.5
    min_gap: float = 4.0
    comfort_accel: float = 1.5
    comfort_decel: float = 2.0
    accel_exponent: float = 4.0

    def __post_init__(self) -> None:
        for name in ("desired_speed", "time_headway", "min_gap", "comfort_accel",
                     "comfort_decel", "accel_exponent"):
            if not getattr(self, name) > 0.0:
                raise InvalidParameterError(f"IDM parameter {name} must be positive")


@dataclass(frozen=True)
class Kinematics:
    position: float
    velocity: float


@dataclass(frozen=True)
class ScenarioState:
    ego: Kinematics
    preceding: Kinematics
    following: Kinematics

    def __post_init__(self) -> None:
        for role in ("ego", "preceding", "following"):
            if getattr(self, role).velocity < 0.0:
                raise InvalidParameterError(f"{role} velocity must be non-negative")

    def gaps(self, vehicle_length: float) -> tuple[float, float]:
        """Bumper-to-bumper gaps (ahead of ego, behind ego)."""
        return (
            self.preceding.position - self.ego.position - vehicle_length,
            self.ego.position - self.following.position - vehicle_length,
        )


@dataclass(frozen=True)
class PlannedTrajectory:
    accelerations: np.ndarray
    predicted_states: list[ScenarioState]
    objective_value: float
    feasible: bool
    suboptimal: bool = False
    max_violation: float = field(default=math.nan, compare=False)


class IdmResult(NamedTuple):
    acceleration: float
    gap_violation: bool


def idm_acceleration(
    params: IdmParams,
    follower_v: float,
    follower_x: float,
    leader_v: float,
    leader_x: float,
    vehicle_length: float = 5.0,
    max_decel: float = 8.0,
) -> IdmResult:
    """Intelligent Driver Model acceleration of a follower behind a leader.

    A non-positive gap returns ``-max_decel`` with the violation flag set.
    """
    gap = leader_x - follower_x - vehicle_length
    if gap <= 0.0:
        return IdmResult(-max_decel, True)
    p = params
    dyn = follower_v * p.time_headway + follower_v * (follower_v - leader_v) / (
        2.0 * math.sqrt(p.comfort_accel * p.comfort_decel)
    )
    desired = p.min_gap + max(dyn, 0.0)
    accel = p.comfort_accel * (
        1.0 - (follower_v / p.desired_speed) ** p.accel_exponent - (desired / gap) ** 2
    )
    return IdmResult(accel, False)


def propagate_braking(position: float, velocity: float, decel: float, dt: float, steps: int):
    """Constant braking clamped at standstill with trapezoidal positions.

    Returns arrays ``(x, v)`` of length ``steps + 1``.
    """
    if not decel > 0.0:
        raise InvalidParameterError("braking deceleration must be positive")
    x = np.empty(steps + 1)
    v = np.empty(steps + 1)
    x[0], v[0] = position, velocity
    for t in range(steps):
        v[t + 1] = max(v[t] - decel * dt, 0.0)
        x[t + 1] = x[t] + (v[t] + v[t + 1]) * dt / 2.0
    return x, v


def propagate_worst_case_preceding(state: ScenarioState, b: float, dt: float, steps: int):
    return propagate_braking(state.preceding.position, state.preceding.velocity, b, dt, steps)


def objective(config: ControllerConfig, error_model: ErrorModel, accelerations) -> float:
    """Exact planner objective of an acceleration sequence."""
    a = np.asarray(accelerations, dtype=np.float64)
    prev = np.concatenate(([config.prev_accel], a[:-1]))
    e = error_model.floor + error_model.amplitude * np.exp(-(a * a) / (2.0 * error_model.width**2))
    w = config.oscillation_sign * config.oscillation_weight
    return float(np.sum(e) - w * np.sum((a - prev) ** 2))


class _Problem:
    """Packed planning problem shared by the descent and the exact checker."""

    def __init__(self, config: ControllerConfig, error_model: ErrorModel, idm: IdmParams,
                 initial: ScenarioState):
        T = config.horizon_steps
        self.config = config
        self.error_model = error_model
        self.xp, self.vp = propagate_braking(initial.preceding.position, initial.preceding.velocity,
                                             config.preceding_max_decel, config.dt, T)
        self.xf, self.vf = propagate_braking(initial.following.position, initial.following.velocity,
                                             config.follower_max_decel, config.dt, T)
        p = np.zeros(K.N_PARAMS)
        p[K.P_DT] = config.dt
        p[K.P_AMIN] = config.a_min
        p[K.P_AMAX] = config.a_max
        p[K.P_X0] = initial.ego.position
        p[K.P_V0] = initial.ego.velocity
        p[K.P_APREV] = config.prev_accel
        p[K.P_WOSC] = config.oscillation_sign * config.oscillation_weight
        p[K.P_EAMP] = error_model.amplitude
        p[K.P_EWID] = error_model.width
        p[K.P_EFLO] = error_model.floor
        p[K.P_GAPMIN] = config.vehicle_length + config.margin
        p[K.P_TDEC] = -config.a_min
        p[K.P_BDEC] = config.preceding_max_decel
        p[K.P_IV0] = idm.desired_speed
        p[K.P_IT] = idm.time_headway
        p[K.P_IS0] = idm.min_gap
        p[K.P_IA] = idm.comfort_accel
        p[K.P_IB] = idm.comfort_decel
        p[K.P_IDELTA] = idm.accel_exponent
        p[K.P_LEN] = config.vehicle_length
        p[K.P_FMAX] = config.follower_max_decel
        p[K.P_SHARP] = config.softplus_sharpness
        p[K.P_BUFG] = GAP_BUFFER
        p[K.P_BUFI] = IDM_BUFFER
        self.params = p

    def traces(self):
        return self.xp, self.vp, self.xf, self.vf

    def worst(self, a) -> float:
        return K.plan_check(a, self.params, *self.traces())[0]

    def feasible(self, a) -> bool:
        return self.worst(a) <= -FEASIBILITY_TOL

    def objective(self, a) -> float:
        return objective(self.config, self.error_model, a)

    def descend(self, a) -> np.ndarray:
        p = self.params.copy()
        for rho in PENALTY_SCHEDULE:
            p[K.P_RHO] = rho
            a, _ = K.plan_descend(a, p, *self.traces(), max_iter=DESCENT_ITERATIONS)
        return a

    def states(self, a) -> list[ScenarioState]:
        _, x, v = K.plan_check(a, self.params, *self.traces())
        return [
            ScenarioState(Kinematics(float(x[t]), float(v[t])),
                          Kinematics(float(self.xp[t]), float(self.vp[t])),
                          Kinematics(float(self.xf[t]), float(self.vf[t])))
            for t in range(len(x))
        ]


def _bisect_feasible(problem: _Problem, feasible_a: np.ndarray, target_a: np.ndarray) -> np.ndarray:
    """Furthest feasible point on the segment from ``feasible_a`` towards ``target_a``."""
    lo, hi = 0.0, 1.0
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if problem.feasible(feasible_a + mid * (target_a - feasible_a)):
            lo = mid
        else:
            hi = mid
    return feasible_a + lo * (target_a - feasible_a)


def _polish_moves(T: int, extremes: tuple[float, float]):
    """Single extremes, adjacent extreme pairs and adjacent swaps (``None`` values)."""
    for t in range(T):
        for bound in extremes:
            yield (t,), (bound,)
        if t + 1 < T:
            for pair in itertools.product(extremes, extremes):
                yield (t, t + 1), pair
            yield (t, t + 1), None


def _polish(problem: _Problem, a: np.ndarray) -> np.ndarray:
    """First-improvement sweeps over extreme moves, backed off by bisection when infeasible."""
    cfg = problem.config
    best_obj = problem.objective(a)
    for _ in range(POLISH_SWEEPS):
        improved = False
        for idx, values in _polish_moves(a.size, (cfg.a_min, cfg.a_max)):
            trial = a.copy()
            trial[list(idx)] = a[list(idx[::-1])] if values is None else values
            if np.array_equal(trial, a) or problem.objective(trial) >= best_obj:
                continue
            if not problem.feasible(trial):
                trial = _bisect_feasible(problem, a, trial)
            obj = problem.objective(trial)
            if obj < best_obj - 1e-12:
                a, best_obj, improved = trial, obj, True
        if not improved:
            break
    return a


def _starts(config: ControllerConfig, warm_start) -> list[np.ndarray]:
    T = config.horizon_steps
    lo, hi = config.a_min, config.a_max
    first = lo if abs(lo - config.prev_accel) >= abs(hi - config.prev_accel) else hi
    second = hi if first == lo else lo
    alternating = np.array([first if t % 2 == 0 else second for t in range(T)])
    starts = [
        np.zeros(T),
        np.full(T, hi),
        alternating,
        np.where(alternating == first, second, first).astype(np.float64),
        np.full(T, lo),
    ]
    if warm_start is not None:
        warm = np.asarray(warm_start, dtype=np.float64)
        shifted = np.concatenate((warm[1:], warm[-1:]))[:T]
        if shifted.size == T:
            starts.append(np.clip(shifted, lo, hi))
    rng = np.random.default_rng(config.seed)
    starts.extend(rng.uniform(lo, hi, size=(config.n_random_starts, T)))
    return starts


def plan(
    config: ControllerConfig,
    error_model: ErrorModel,
    idm: IdmParams,
    initial: ScenarioState,
    warm_start: Sequence[float] | None = None,
) -> PlannedTrajectory:
    """Solve the finite-horizon excitation problem from ``initial``.

    Multi-start projected-gradient descent on a penalised, softplus-smoothed
    transcription; every result is verified by an exact rollout and backed
    off towards a feasible anchor by bisection when it violates a
    constraint. If no feasible plan exists the constant ``a_min`` braking
    fallback is returned with ``feasible=False``.
    """
    problem = _Problem(config, error_model, idm, initial)
    T = config.horizon_steps
    fallback = np.full(T, config.a_min)

    candidates: list[tuple[float, int, np.ndarray, bool]] = []
    if min(initial.gaps(config.vehicle_length)) > config.margin:
        starts = _starts(config, warm_start)
        # constant a_min braking first: it is the preferred back-off anchor
        anchors = [s for s in (starts[4], *starts) if problem.feasible(s)]
        for i, start in enumerate(starts):
            a = problem.descend(start)
            backed_off = not problem.feasible(a)
            if backed_off:
                if not anchors:
                    continue
                a = _bisect_feasible(problem, anchors[0], a)
            candidates.append((problem.objective(a), i, a, backed_off))

    if not candidates:
        return PlannedTrajectory(fallback, problem.states(fallback), problem.objective(fallback),
                                 feasible=False, max_violation=problem.worst(fallback))

    _, _, best, backed_off = min(candidates, key=lambda c: (c[0], c[1]))
    best = _polish(problem, best)
    return PlannedTrajectory(best, problem.states(best), problem.objective(best),
                             feasible=True, suboptimal=backed_off,
                             max_violation=problem.worst(best))


def nominal_acceleration(config: ControllerConfig, idm: IdmParams, state: ScenarioState) -> float:
    """Comfort-oriented IDM following of the preceding vehicle (no excitation)."""
    accel, _ = idm_acceleration(idm, state.ego.velocity, state.ego.position,
                                state.preceding.velocity, state.preceding.position,
                                config.vehicle_length, -config.a_min)
    return float(min(max(accel, config.a_min), config.a_max))


def gate_open(config: ControllerConfig, state: ScenarioState) -> bool:
    return state.ego.velocity > config.v_threshold


class HighSlipController:
    """Receding-horizon wrapper: re-plans each step and applies the first action."""

    def __init__(self, config: ControllerConfig, error_model: ErrorModel, idm: IdmParams):
        self.config = config
        self.error_model = error_model
        self.idm = idm
        self.prev_accel = config.prev_accel
        self.last_plan: PlannedTrajectory | None = None

    def step(self, state: ScenarioState) -> float:
        cfg = replace(self.config, prev_accel=self.prev_accel)
        if gate_open(cfg, state):
            warm = self.last_plan.accelerations if self.last_plan is not None else None
            self.last_plan = plan(cfg, self.error_model, self.idm, state, warm_start=warm)
            accel = float(self.last_plan.accelerations[0])
        else:
            self.last_plan = None
            accel = nominal_acceleration(cfg, self.idm, state)
        self.prev_accel = accel
        return accel


def gate_and_step(
    config: ControllerConfig, error_model: ErrorModel, idm: IdmParams, current: ScenarioState
) -> float:
    """One receding-horizon control decision for ``current``."""
    if gate_open(config, current):
        return float(plan(config, error_model, idm, current).accelerations[0])
    return nominal_acceleration(config, idm, current)
