"""Peak-TRFC estimation: windowed bounded fitting, slip binning, error models.

A fixed stiffness factor ``B`` pins the critical slip ratio; the shape and
peak factors ``(C, D)`` are fitted to each window of slip/force samples.
Estimates are grouped into slip-ratio bins, scored with a bias-variance
error decomposition, and repeated observations of one location are combined
with inverse-variance weights.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import least_squares, minimize
from scipy.stats import qmc

from trfc import kernels
from trfc.errors import FitError, InvalidParameterError, NoInteriorPeakError
from trfc.tire_model import TireParams, peak_trfc

logger = logging.getLogger(__name__)

BIN_START = 0.01
BIN_WIDTH = 0.01
BIN_STOP = 0.30
N_BINS = 29

DEFAULT_B = 10.0
DEFAULT_BOUNDS_C = (1.9, 2.3)
DEFAULT_BOUNDS_D = (1e-6, 1.3)
DEFAULT_WINDOW = 10
N_STARTS = 8
START_SEED = 20240917


@dataclass(frozen=True)
class EstimatorSettings:
    """Configuration of the trace estimation path.

    Args:
        fixed_B: Stiffness factor held fixed during fitting.
        bounds_C, bounds_D: Box bounds of the fitted shape and peak factors.
        window: Samples per fitting window, centred on the estimated sample.
        epsilon: Slip-ratio denominator floor [m/s].
        min_observation_slip: Lowest bin edge pooled into a run observation.
    """

    fixed_B: float = DEFAULT_B
    bounds_C: tuple[float, float] = DEFAULT_BOUNDS_C
    bounds_D: tuple[float, float] = DEFAULT_BOUNDS_D
    window: int = DEFAULT_WINDOW
    epsilon: float = 0.1
    min_observation_slip: float = 0.05

    def __post_init__(self) -> None:
        object.__setattr__(self, "bounds_C", tuple(float(v) for v in self.bounds_C))
        object.__setattr__(self, "bounds_D", tuple(float(v) for v in self.bounds_D))
        _check_bounds(self.bounds_C, self.bounds_D)
        if not self.fixed_B > 0.0:
            raise InvalidParameterError("fixed_B must be positive")
        if int(self.window) != self.window or self.window < 1:
            raise InvalidParameterError("window must be an integer >= 1")
        if not self.epsilon > 0.0:
            raise InvalidParameterError("epsilon must be positive")


@dataclass(frozen=True)
class SlipForceSample:
    time: float
    slip_ratio: float
    normalized_force: float
    accel_context: float


@dataclass(frozen=True)
class FitResult:
    C: float
    D: float
    peak_trfc: float
    objective: float
    peak_is_interior: bool = True


@dataclass(frozen=True)
class TrfcEstimate:
    time: float
    slip_bin_index: int
    peak_trfc: float
    fitted_C: float
    fitted_D: float
    accel_context: float


@dataclass(frozen=True)
class BinStats:
    """Per-bin summary. ``std`` is NaN when the bin holds fewer than two estimates."""

    bin_index: int
    count: int
    mean: float
    std: float
    mse_vs_reference: float
    accel_context: float = math.nan

    @property
    def variance(self) -> float:
        return self.std**2


@dataclass(frozen=True)
class ErrorModel:
    """Expected estimation error vs. acceleration magnitude.

    ``e(a) = floor + amplitude * exp(-a^2 / (2 width^2))``
    """

    amplitude: float
    width: float
    floor: float

    def __post_init__(self) -> None:
        if not self.amplitude >= 0.0:
            raise InvalidParameterError("error-model amplitude must be non-negative")
        if not self.width > 0.0:
            raise InvalidParameterError("error-model width must be positive")
        if not self.floor >= 0.0:
            raise InvalidParameterError("error-model floor must be non-negative")

    @property
    def is_flat(self) -> bool:
        """Diagnostic flag: the model carries no acceleration dependence."""
        return self.amplitude == 0.0

    def __call__(self, accel):
        return evaluate_error(self, accel)


@dataclass(frozen=True)
class LocationEstimate:
    location_id: str
    mean: float
    variance: float
    n_observations: int

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def _check_bounds(bounds_C: tuple[float, float], bounds_D: tuple[float, float]) -> None:
    c_lo, c_hi = bounds_C
    d_lo, d_hi = bounds_D
    if not (1.5 <= c_lo < c_hi <= 3.0):
        raise InvalidParameterError(f"C bounds {bounds_C} must satisfy 1.5 <= lo < hi <= 3.0")
    if not (0.0 < d_lo < d_hi <= 1.5):
        raise InvalidParameterError(f"D bounds {bounds_D} must satisfy 0 < lo < hi <= 1.5")


def _start_points(bounds_C, bounds_D, n_starts: int) -> np.ndarray:
    unit = qmc.LatinHypercube(d=2, seed=START_SEED).random(n_starts)
    return qmc.scale(unit, [bounds_C[0], bounds_D[0]], [bounds_C[1], bounds_D[1]])


def fit_point(
    kappa: Sequence[float],
    force: Sequence[float],
    fixed_B: float = DEFAULT_B,
    bounds_C: tuple[float, float] = DEFAULT_BOUNDS_C,
    bounds_D: tuple[float, float] = DEFAULT_BOUNDS_D,
    n_starts: int = N_STARTS,
) -> FitResult:
    """Bounded least-squares fit of ``(C, D)`` with ``B`` held fixed.

    Multi-start L-BFGS-B from a Latin-hypercube design over the box; the
    best local minimum wins, earliest start on ties.

    Raises:
        FitError: empty window or no start produced a finite optimum.
    """
    k = np.ascontiguousarray(kappa, dtype=np.float64)
    y = np.ascontiguousarray(force, dtype=np.float64)
    if k.size == 0:
        raise FitError("cannot fit an empty window")
    if k.shape != y.shape:
        raise InvalidParameterError("slip and force arrays differ in length")
    _check_bounds(bounds_C, bounds_D)

    def objective(theta):
        sse, d_c, d_d = kernels.fit_sse_grad(fixed_B, theta[0], theta[1], k, y)
        return sse, np.array([d_c, d_d])

    best = None
    for start in _start_points(bounds_C, bounds_D, n_starts):
        res = minimize(
            objective, start, jac=True, method="L-BFGS-B", bounds=[bounds_C, bounds_D],
            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 500},
        )
        if not np.isfinite(res.fun) or not np.all(np.isfinite(res.x)):
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise FitError("every start of the bounded fit diverged")

    c_hat, d_hat = (float(v) for v in best.x)
    params = TireParams(fixed_B, c_hat, d_hat)
    try:
        peak, interior = peak_trfc(params), True
    except NoInteriorPeakError as exc:
        peak, interior = exc.edge_value, False
    return FitResult(c_hat, d_hat, peak, float(best.fun), interior)


def assign_bin(kappa: float) -> int | None:
    """Index of the 0.01-wide slip bin holding ``|kappa|`` within [0.01, 0.30)."""
    mag = abs(kappa)
    if not (BIN_START <= mag < BIN_STOP):
        return None
    # round() absorbs representation error such as 0.07 * 100 = 7.000000000000001
    return min(math.floor(round(mag / BIN_WIDTH, 9)) - 1, N_BINS - 1)


def bin_lower_edge(index: int) -> float:
    return BIN_START + index * BIN_WIDTH


def window_bounds(n: int, center: int, width: int) -> tuple[int, int]:
    """Half-open index range of a ``width``-sample window around ``center``, kept inside [0, n)."""
    width = min(width, n)
    start = center - width // 2
    start = max(0, min(start, n - width))
    return start, start + width


def estimate_series(
    samples: Sequence[SlipForceSample],
    fixed_B: float = DEFAULT_B,
    bounds_C: tuple[float, float] = DEFAULT_BOUNDS_C,
    bounds_D: tuple[float, float] = DEFAULT_BOUNDS_D,
    window: int = DEFAULT_WINDOW,
) -> list[TrfcEstimate]:
    """Fit a window around every sample whose slip falls in a bin."""
    if window < 1:
        raise InvalidParameterError("window must hold at least one sample")
    kappa = np.array([s.slip_ratio for s in samples], dtype=np.float64)
    force = np.array([s.normalized_force for s in samples], dtype=np.float64)
    estimates = []
    for i, sample in enumerate(samples):
        idx = assign_bin(sample.slip_ratio)
        if idx is None:
            continue
        lo, hi = window_bounds(len(samples), i, window)
        fit = fit_point(kappa[lo:hi], force[lo:hi], fixed_B, bounds_C, bounds_D)
        estimates.append(
            TrfcEstimate(sample.time, idx, fit.peak_trfc, fit.C, fit.D, sample.accel_context)
        )
    if samples and not estimates:
        logger.warning("no sample reached |slip| >= %.2f; excitation insufficient for estimation", BIN_START)
    return estimates


def bin_statistics(estimates: Iterable[TrfcEstimate], reference_peak: float = math.nan) -> list[BinStats]:
    """Per-bin mean, population std and MSE against ``reference_peak``.

    The MSE uses the bias-variance split ``var + (mean - reference)^2``;
    population variance keeps that split an exact identity.
    """
    groups: dict[int, list[TrfcEstimate]] = defaultdict(list)
    for est in estimates:
        groups[est.slip_bin_index].append(est)
    stats = []
    for idx in sorted(groups):
        members = groups[idx]
        y = np.array([e.peak_trfc for e in members])
        mean = float(y.mean())
        var = float(np.mean((y - mean) ** 2))
        std = math.sqrt(var) if y.size >= 2 else math.nan
        mse = var + (mean - reference_peak) ** 2
        accel = float(np.mean([abs(e.accel_context) for e in members]))
        stats.append(BinStats(idx, int(y.size), mean, std, mse, accel))
    return stats


def evaluate_error(model: ErrorModel, accel):
    a = np.asarray(accel, dtype=np.float64)
    value = model.floor + model.amplitude * np.exp(-(a * a) / (2.0 * model.width**2))
    return float(value) if np.ndim(accel) == 0 else value


def fit_error_model(pairs: Iterable[tuple[float, float]]) -> ErrorModel:
    """Least-squares Gaussian-with-floor fit of observed error vs. |acceleration|.

    Flat data yields a model with zero amplitude (see ``ErrorModel.is_flat``).
    """
    data = np.array([(abs(a), e) for a, e in pairs], dtype=np.float64)
    if data.ndim != 2 or len(np.unique(data[:, 0])) < 3:
        raise InvalidParameterError("error-model fit needs at least three distinct accelerations")
    a, e = data[:, 0], data[:, 1]
    if not np.all(np.isfinite(data)) or np.any(e < 0.0):
        raise InvalidParameterError("error-model data must be finite with non-negative errors")
    spread = float(e.max() - e.min())
    if spread <= 1e-12 * max(1.0, float(e.max())):
        logger.warning("error-model data is flat; returning amplitude 0")
        return ErrorModel(0.0, max(float(a.max()), 1.0), float(e.mean()))

    order = np.argsort(a)
    amp0 = max(float(e[order[0]] - e.min()), spread)
    half = e.min() + 0.5 * amp0
    below = a[order][e[order] <= half]
    width0 = float(below[0]) / math.sqrt(2.0 * math.log(2.0)) if below.size and below[0] > 0 else float(np.median(a)) or 1.0

    def residual(theta):
        amp, width, floor = theta
        return floor + amp * np.exp(-(a * a) / (2.0 * width * width)) - e

    candidates = []
    for w0 in (width0, 0.5 * width0, 2.0 * width0, float(a.max())):
        x0 = [amp0, max(w0, 1e-3), max(float(e.min()), 0.0)]
        res = least_squares(residual, x0, bounds=([0.0, 1e-6, 0.0], [np.inf, np.inf, np.inf]),
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=10000)
        candidates.append(res)
    best = min(candidates, key=lambda r: r.cost)
    amp, width, floor = (float(v) for v in best.x)
    return ErrorModel(amp, width, floor)


def aggregate_location(observations: Iterable[tuple[float, float]], location_id: str = "") -> LocationEstimate:
    """Inverse-variance combination of independent (mean, std) observations.

    The combined variance is ``1 / sum(1 / std_k^2)``; the mean is the
    matching precision-weighted average.
    """
    obs = list(observations)
    if not obs:
        raise InvalidParameterError("cannot aggregate an empty set of observations")
    for _, std in obs:
        if not (math.isfinite(std) and std > 0.0):
            raise InvalidParameterError(f"observation std must be positive and finite, got {std}")
    # fsum is exactly rounded, so the result does not depend on input order
    precision = math.fsum((1.0 / std) ** 2 for _, std in obs)
    weighted = math.fsum(mean * (1.0 / std) ** 2 for mean, std in obs)
    variance = 1.0 / precision
    return LocationEstimate(str(location_id), variance * weighted, variance, len(obs))


def run_observation(estimates: Sequence[TrfcEstimate], min_slip: float = 0.05) -> tuple[float, float, int]:
    """Pooled (mean, population std, count) of estimates from bins at or above ``min_slip``.

    This is the single observation one pass over a location contributes to
    :func:`aggregate_location`.
    """
    y = np.array([e.peak_trfc for e in estimates
                  if bin_lower_edge(e.slip_bin_index) >= min_slip - 1e-12])
    if y.size < 2:
        raise FitError(f"only {y.size} estimates at |slip| >= {min_slip}; need two for a spread")
    mean = float(y.mean())
    return mean, float(np.sqrt(np.mean((y - mean) ** 2))), int(y.size)
