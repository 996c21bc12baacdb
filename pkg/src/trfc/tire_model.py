"""Longitudinal Magic Formula tire model.

The simplified model fixes the curvature factor ``E = 1`` so the force curve
becomes ``D * sin(C * arctan(arctan(B * kappa)))``. With that form the
critical slip ratio (where the force peaks) has a closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from trfc.errors import BranchOutOfDomainError, InvalidParameterError, NoInteriorPeakError

FloatArray = npt.NDArray[np.float64]
ArrayLike = float | FloatArray

# Supremum of arctan(arctan(B*kappa)) as kappa -> inf.
PHI_MAX = math.atan(math.pi / 2.0)

#: Smallest shape factor for which sin(C * phi) reaches pi/2 before phi saturates.
C_MIN_INTERIOR_PEAK = math.pi / (2.0 * PHI_MAX)

KAPPA_DOMAIN = (-1.0, 1.0)


@dataclass(frozen=True)
class TireParams:
    """Magic Formula coefficients.

    Args:
        B: Stiffness factor (-), positive.
        C: Shape factor (-), positive. Typical range 1.9-2.3.
        D: Peak factor in friction-coefficient units, non-negative.
        E: Curvature factor (-). Only the full formula uses it.
    """

    B: float
    C: float
    D: float
    E: float = 1.0

    def __post_init__(self) -> None:
        for name in ("B", "C", "D", "E"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"tire parameter {name} must be finite")
        if self.B <= 0.0:
            raise InvalidParameterError("tire stiffness factor B must be positive")
        if self.C <= 0.0:
            raise InvalidParameterError("tire shape factor C must be positive")
        if self.D < 0.0:
            raise InvalidParameterError("tire peak factor D must be non-negative")

    @property
    def critical_slip(self) -> float:
        return critical_slip_ratio(self.B, self.C, 0)


def _out(value: FloatArray, *inputs: object) -> ArrayLike:
    if all(np.ndim(x) == 0 for x in inputs):
        return float(value)
    return value


def slip_ratio(
    wheel_angular_velocity: ArrayLike,
    effective_rolling_radius: float,
    vehicle_velocity: ArrayLike,
    epsilon: float = 0.1,
) -> ArrayLike:
    """Unified slip ratio ``(omega * R_e - V) / max(V, epsilon)``.

    Positive under drive, negative under braking. ``epsilon`` keeps the ratio
    finite at standstill.
    """
    if not effective_rolling_radius > 0.0:
        raise InvalidParameterError("effective rolling radius must be positive")
    if not epsilon > 0.0:
        raise InvalidParameterError("slip epsilon must be positive")
    omega = np.asarray(wheel_angular_velocity, dtype=np.float64)
    v = np.asarray(vehicle_velocity, dtype=np.float64)
    kappa = (omega * effective_rolling_radius - v) / np.maximum(v, epsilon)
    return _out(kappa, wheel_angular_velocity, vehicle_velocity)


def force_full(params: TireParams, kappa: ArrayLike) -> ArrayLike:
    """Full Magic Formula ``D sin(C arctan(Bk - E(Bk - arctan(Bk))))``."""
    k = np.asarray(kappa, dtype=np.float64)
    bk = params.B * k
    arg = bk - params.E * (bk - np.arctan(bk))
    return _out(params.D * np.sin(params.C * np.arctan(arg)), kappa)


def force_simplified(params: TireParams, kappa: ArrayLike) -> ArrayLike:
    """Magic Formula with ``E = 1``: ``D sin(C arctan(arctan(B k)))``."""
    k = np.asarray(kappa, dtype=np.float64)
    return _out(params.D * np.sin(params.C * np.arctan(np.arctan(params.B * k))), kappa)


def force_derivative(params: TireParams, kappa: ArrayLike) -> ArrayLike:
    """Analytic slope d(force_simplified)/d(kappa)."""
    k = np.asarray(kappa, dtype=np.float64)
    bk = params.B * k
    inner = np.arctan(bk)
    chain = params.B / ((1.0 + inner * inner) * (1.0 + bk * bk))
    value = params.D * params.C * np.cos(params.C * np.arctan(inner)) * chain
    return _out(value, kappa)


def critical_slip_ratio(B: float, C: float, n: int = 0) -> float:
    """Closed-form stationary point of the simplified force curve on branch ``n``.

    Solves ``arctan(arctan(B x)) = pi/(2C) + n pi/C``. Branches whose target
    angle lies outside the range of ``arctan(arctan(.))`` are rejected
    instead of being wrapped.

    Raises:
        InvalidParameterError: ``B`` or ``C`` not positive.
        BranchOutOfDomainError: branch ``n`` has no physical critical point.
    """
    if not B > 0.0:
        raise InvalidParameterError("stiffness factor B must be positive")
    if not C > 0.0:
        raise InvalidParameterError("shape factor C must be positive")
    target = math.pi / (2.0 * C) + n * math.pi / C
    if not -math.pi / 2.0 < target < math.pi / 2.0:
        raise BranchOutOfDomainError(f"branch n={n}: angle {target:.6g} outside (-pi/2, pi/2)")
    inner = math.tan(target)
    if not -math.pi / 2.0 < inner < math.pi / 2.0:
        raise BranchOutOfDomainError(
            f"branch n={n}: inner tangent {inner:.6g} outside (-pi/2, pi/2) for C={C}"
        )
    return math.tan(inner) / B


def peak_trfc(params: TireParams) -> float:
    """Maximum of the simplified force over positive slip.

    Equal to ``D`` whenever the peak is interior. Below the shape-factor
    threshold the curve is monotone on (0, 1]; the supremum at ``kappa = 1``
    is attached to the raised error.
    """
    if params.C >= C_MIN_INTERIOR_PEAK:
        kappa_star = critical_slip_ratio(params.B, params.C, 0)
        if kappa_star <= KAPPA_DOMAIN[1]:
            return float(params.D)
    edge = float(force_simplified(params, KAPPA_DOMAIN[1]))
    raise NoInteriorPeakError(
        f"no interior force peak for B={params.B}, C={params.C} on (0, 1]", edge_value=edge
    )


def invert_rising_branch(params: TireParams, mu: float) -> float:
    """Slip on the rising branch ``[-csr, csr]`` that produces force ``mu``.

    Demands at or beyond the peak saturate at the critical slip ratio.
    """
    if params.D == 0.0:
        return 0.0
    csr = critical_slip_ratio(params.B, params.C, 0)
    ratio = mu / params.D
    if ratio >= 1.0:
        return csr
    if ratio <= -1.0:
        return -csr
    phi = math.asin(ratio) / params.C
    return math.tan(math.tan(phi)) / params.B
