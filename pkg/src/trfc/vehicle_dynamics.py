"""Four-wheel longitudinal vehicle model with drag, slope and load transfer."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

from trfc.errors import ConvergenceError, InvalidParameterError
from trfc.tire_model import TireParams, force_simplified, slip_ratio

GRAVITY = 9.81

RELAXATION = 0.5
MAX_ITERATIONS = 50
ACCEL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class VehicleParams:
    """Rigid-body parameters of the ego vehicle.

    Args:
        mass: Vehicle mass [kg].
        a: CG to front axle distance [m].
        b: CG to rear axle distance [m].
        cg_height: CG height above ground [m].
        air_density: [kg/m^3].
        drag_coefficient: Aerodynamic drag coefficient (-).
        frontal_area: [m^2].
        rolling_radius: Effective tire rolling radius [m].
        gravity: [m/s^2].
    """

    mass: float = 1500.0
    a: float = 1.4
    b: float = 1.4
    cg_height: float = 0.5
    air_density: float = 1.2
    drag_coefficient: float = 0.3
    frontal_area: float = 2.2
    rolling_radius: float = 0.3
    gravity: float = GRAVITY

    def __post_init__(self) -> None:
        for name in ("mass", "a", "b", "cg_height", "air_density", "frontal_area",
                     "rolling_radius", "gravity"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise InvalidParameterError(f"vehicle parameter {name} must be positive, got {value}")
        if not (math.isfinite(self.drag_coefficient) and self.drag_coefficient >= 0.0):
            raise InvalidParameterError("vehicle parameter drag_coefficient must be non-negative")

    @property
    def wheelbase(self) -> float:
        return self.a + self.b


@dataclass(frozen=True)
class WheelLoads:
    """Normal load on one wheel of each axle [N]."""

    front_per_wheel: float
    rear_per_wheel: float

    @property
    def total(self) -> float:
        return 2.0 * (self.front_per_wheel + self.rear_per_wheel)


@dataclass(frozen=True)
class VehicleState:
    position: float = 0.0
    velocity: float = 0.0
    acceleration: float = 0.0
    wheel_angular_velocity_front: float = 0.0
    wheel_angular_velocity_rear: float = 0.0

    def __post_init__(self) -> None:
        if self.velocity < 0.0:
            raise InvalidParameterError("vehicle velocity must be non-negative")


def axle_loads(params: VehicleParams, longitudinal_accel: float) -> WheelLoads:
    """Per-wheel normal loads under longitudinal load transfer.

    Warns (without failing) when a load turns negative, i.e. the acceleration
    left the range where the model is meaningful.
    """
    scale = params.mass * params.gravity / (2.0 * params.wheelbase)
    pitch = params.cg_height * longitudinal_accel / params.gravity
    loads = WheelLoads(scale * (params.b - pitch), scale * (params.a + pitch))
    if loads.front_per_wheel < 0.0 or loads.rear_per_wheel < 0.0:
        warnings.warn(
            f"acceleration {longitudinal_accel:.3g} m/s^2 unloads an axle; "
            "load-transfer model outside its validity envelope",
            RuntimeWarning,
            stacklevel=2,
        )
    return loads


def drag_force(params: VehicleParams, velocity: float) -> float:
    if velocity < 0.0:
        raise InvalidParameterError("velocity must be non-negative for the drag law")
    return 0.5 * params.air_density * params.drag_coefficient * params.frontal_area * velocity**2


def wheel_slips(params: VehicleParams, state: VehicleState, epsilon: float = 0.1) -> tuple[float, float]:
    """Front and rear slip ratios implied by the wheel speeds."""
    r = params.rolling_radius
    return (
        slip_ratio(state.wheel_angular_velocity_front, r, state.velocity, epsilon),
        slip_ratio(state.wheel_angular_velocity_rear, r, state.velocity, epsilon),
    )


def _force_balance(
    params: VehicleParams, mu_front: float, mu_rear: float, accel: float, resist: float
) -> float:
    loads = axle_loads(params, accel)
    tire_force = 2.0 * (mu_front * loads.front_per_wheel + mu_rear * loads.rear_per_wheel)
    return (tire_force - resist) / params.mass


def net_acceleration(
    params: VehicleParams,
    tire: TireParams,
    state: VehicleState,
    slope_rad: float = 0.0,
    epsilon: float = 0.1,
) -> float:
    """Longitudinal acceleration consistent with its own load transfer.

    The loads depend on the acceleration they produce, so the balance is
    solved by damped fixed-point iteration.

    Raises:
        ConvergenceError: no fixed point within the iteration cap.
    """
    kappa_f, kappa_r = wheel_slips(params, state, epsilon)
    mu_f = float(force_simplified(tire, kappa_f))
    mu_r = float(force_simplified(tire, kappa_r))
    resist = drag_force(params, state.velocity) + params.mass * params.gravity * math.sin(slope_rad)

    accel = state.acceleration
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for _ in range(MAX_ITERATIONS):
            target = _force_balance(params, mu_f, mu_r, accel, resist)
            if abs(target - accel) < ACCEL_TOLERANCE:
                return target
            accel += RELAXATION * (target - accel)
    raise ConvergenceError(
        f"load/acceleration fixed point did not converge in {MAX_ITERATIONS} iterations"
    )


def wheel_speed_for_slip(params: VehicleParams, velocity: float, kappa: float, epsilon: float = 0.1) -> float:
    """Wheel angular velocity that realises slip ``kappa`` at ``velocity``."""
    return (velocity + kappa * max(velocity, epsilon)) / params.rolling_radius


def step(
    params: VehicleParams,
    tire: TireParams,
    state: VehicleState,
    commanded_wheel_slip: float,
    slope_rad: float = 0.0,
    dt: float = 0.1,
    epsilon: float = 0.1,
) -> VehicleState:
    """Advance one explicit step with all four wheels held at the commanded slip.

    Velocity is clamped at standstill and position uses the trapezoidal
    update, which equals ``x + v dt + a dt^2 / 2`` whenever the clamp is idle.
    The returned state carries the acceleration realised over the step.
    """
    if not dt > 0.0:
        raise InvalidParameterError("time step must be positive")
    omega = wheel_speed_for_slip(params, state.velocity, commanded_wheel_slip, epsilon)
    driven = replace(state, wheel_angular_velocity_front=omega, wheel_angular_velocity_rear=omega)
    accel = net_acceleration(params, tire, driven, slope_rad, epsilon)
    v_next = max(state.velocity + accel * dt, 0.0)
    x_next = state.position + 0.5 * (state.velocity + v_next) * dt
    omega_next = wheel_speed_for_slip(params, v_next, commanded_wheel_slip, epsilon)
    return VehicleState(
        position=x_next,
        velocity=v_next,
        acceleration=accel,
        wheel_angular_velocity_front=omega_next,
        wheel_angular_velocity_rear=omega_next,
    )
