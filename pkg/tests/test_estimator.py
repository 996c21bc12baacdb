import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trfc.errors import FitError, InvalidParameterError
from trfc.estimator import (
    N_BINS,
    BinStats,
    ErrorModel,
    EstimatorSettings,
    SlipForceSample,
    TrfcEstimate,
    aggregate_location,
    assign_bin,
    bin_lower_edge,
    bin_statistics,
    estimate_series,
    evaluate_error,
    fit_error_model,
    fit_point,
    run_observation,
    window_bounds,
)
from trfc.tire_model import TireParams, force_simplified

TRUTH = TireParams(10.0, 2.0, 0.85)


def _estimate(idx, peak, accel=1.0, t=0.0):
    return TrfcEstimate(t, idx, peak, 2.0, peak, accel)


def test_noiseless_fit_recovers_parameters():
    kappa = np.linspace(0.05, 0.25, 10)
    fit = fit_point(kappa, force_simplified(TRUTH, kappa))
    assert fit.C == pytest.approx(2.0, abs=1e-6)
    assert fit.D == pytest.approx(0.85, abs=1e-6)
    assert fit.peak_trfc == pytest.approx(0.85, abs=1e-6)
    assert fit.peak_is_interior
    assert fit.objective < 1e-15


def test_fit_respects_bounds():
    kappa = np.linspace(0.05, 0.25, 10)
    fit = fit_point(kappa, force_simplified(TireParams(10.0, 2.8, 0.85), kappa))
    assert 1.9 <= fit.C <= 2.3
    assert fit.C == pytest.approx(2.3)


def test_fit_is_deterministic():
    rng = np.random.default_rng(3)
    kappa = rng.uniform(0.1, 0.2, 10)
    force = force_simplified(TRUTH, kappa) + rng.normal(0, 0.02, 10)
    assert fit_point(kappa, force) == fit_point(kappa, force)


def test_fit_input_validation():
    with pytest.raises(FitError):
        fit_point([], [])
    with pytest.raises(InvalidParameterError):
        fit_point([0.1, 0.2], [0.5])
    with pytest.raises(InvalidParameterError):
        fit_point([0.1], [0.5], bounds_C=(1.0, 2.0))
    with pytest.raises(InvalidParameterError):
        fit_point([0.1], [0.5], bounds_D=(0.0, 1.0))


@pytest.mark.parametrize("kappa,expected", [
    (0.0, None), (0.005, None), (0.01, 0), (-0.0199, 0), (0.02, 1), (0.07, 6),
    (0.155, 14), (-0.2999, 28), (0.30, None), (0.5, None),
])
def test_assign_bin(kappa, expected):
    assert assign_bin(kappa) == expected


def test_bin_edges():
    assert bin_lower_edge(0) == pytest.approx(0.01)
    assert bin_lower_edge(N_BINS - 1) == pytest.approx(0.29)
    for i in range(N_BINS):
        assert assign_bin(bin_lower_edge(i)) == i


@pytest.mark.parametrize("n,center,width,expected", [
    (100, 50, 10, (45, 55)), (100, 0, 10, (0, 10)), (100, 99, 10, (90, 100)), (5, 2, 10, (0, 5)),
])
def test_window_bounds(n, center, width, expected):
    assert window_bounds(n, center, width) == expected


def test_estimate_series_skips_unbinned_samples():
    kappa = np.concatenate([np.full(5, 0.001), np.linspace(0.05, 0.2, 15)])
    samples = [SlipForceSample(0.1 * i, k, float(force_simplified(TRUTH, k)), 5.0)
               for i, k in enumerate(kappa)]
    est = estimate_series(samples)
    assert len(est) == 15
    assert all(e.peak_trfc == pytest.approx(0.85, abs=1e-4) for e in est)
    assert est[0].time == pytest.approx(0.5)


def test_estimate_series_no_excitation_logs(caplog):
    samples = [SlipForceSample(0.1 * i, 0.001, 0.01, 0.1) for i in range(20)]
    assert estimate_series(samples) == []
    assert "excitation" in caplog.text


def test_bin_statistics_population_std_and_mse():
    est = [_estimate(3, 0.8), _estimate(3, 0.9), _estimate(5, 0.7)]
    stats = bin_statistics(est, reference_peak=0.85)
    assert [s.bin_index for s in stats] == [3, 5]
    assert stats[0].mean == pytest.approx(0.85)
    assert stats[0].std == pytest.approx(0.05)
    assert stats[0].mse_vs_reference == pytest.approx(0.0025)
    assert math.isnan(stats[1].std)
    assert stats[1].mse_vs_reference == pytest.approx(0.0225)


def test_bin_statistics_without_reference():
    stats = bin_statistics([_estimate(0, 0.8), _estimate(0, 0.9)])
    assert math.isnan(stats[0].mse_vs_reference)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 1.5), min_size=1, max_size=40), st.floats(0.0, 1.5))
def test_mse_decomposition_identity(values, reference):
    stats = bin_statistics([_estimate(0, v) for v in values], reference)[0]
    direct = float(np.mean((np.array(values) - reference) ** 2))
    assert stats.mse_vs_reference == pytest.approx(direct, abs=1e-12)


def test_error_model_evaluation():
    m = ErrorModel(0.3, 2.0, 0.02)
    assert evaluate_error(m, 0.0) == pytest.approx(0.32)
    assert m(2.0) == pytest.approx(0.02 + 0.3 * math.exp(-0.5))
    np.testing.assert_allclose(m(np.array([0.0, 100.0])), [0.32, 0.02])
    assert not m.is_flat


@pytest.mark.parametrize("kwargs", [
    dict(amplitude=-0.1, width=1.0, floor=0.0), dict(amplitude=0.1, width=0.0, floor=0.0),
    dict(amplitude=0.1, width=1.0, floor=-1.0),
])
def test_error_model_validation(kwargs):
    with pytest.raises(InvalidParameterError):
        ErrorModel(**kwargs)


def test_error_model_fit_recovers_known_model():
    truth = ErrorModel(0.3, 2.0, 0.02)
    a = np.array([0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0])
    fitted = fit_error_model(zip(a, truth(a)))
    assert fitted.amplitude == pytest.approx(0.3, abs=1e-6)
    assert fitted.width == pytest.approx(2.0, abs=1e-6)
    assert fitted.floor == pytest.approx(0.02, abs=1e-6)


def test_error_model_fit_three_points():
    truth = ErrorModel(0.1, 3.0, 0.01)
    fitted = fit_error_model([(a, truth(a)) for a in (1.0, 3.0, 6.0)])
    for a in (0.0, 2.0, 5.0):
        assert fitted(a) == pytest.approx(truth(a), abs=1e-3)


def test_error_model_fit_flat_and_insufficient():
    flat = fit_error_model([(1.0, 0.05), (2.0, 0.05), (3.0, 0.05)])
    assert flat.is_flat
    assert flat.floor == pytest.approx(0.05)
    with pytest.raises(InvalidParameterError):
        fit_error_model([(1.0, 0.1), (1.0, 0.2), (-1.0, 0.3)])


def test_aggregate_location_arithmetic():
    loc = aggregate_location([(0.8, 0.1), (0.9, 0.1)], "x")
    assert loc.variance == 0.005
    assert loc.mean == pytest.approx(0.85)
    single = aggregate_location([(0.7, 0.2)])
    assert single.variance == pytest.approx(0.04)
    assert single.std == pytest.approx(0.2)


def test_aggregate_rejects_bad_std():
    with pytest.raises(InvalidParameterError):
        aggregate_location([])
    for bad in (0.0, -0.1, math.nan, math.inf):
        with pytest.raises(InvalidParameterError):
            aggregate_location([(0.8, bad)])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0.0, 1.5), st.floats(1e-3, 1.0)), min_size=1, max_size=20))
def test_aggregate_properties(obs):
    loc = aggregate_location(obs)
    assert loc.variance <= min(s for _, s in obs) ** 2 * (1 + 1e-12)
    assert min(m for m, _ in obs) - 1e-12 <= loc.mean <= max(m for m, _ in obs) + 1e-12
    # exactly rounded sums make the result independent of order
    assert aggregate_location(list(reversed(obs))) == loc


def test_run_observation_pools_high_slip_bins():
    est = [_estimate(2, 0.5), _estimate(4, 0.8), _estimate(10, 0.9), _estimate(12, 0.7)]
    mean, std, count = run_observation(est, min_slip=0.05)
    assert count == 3
    assert mean == pytest.approx(0.8)
    assert std == pytest.approx(math.sqrt(2 / 300))
    with pytest.raises(FitError):
        run_observation(est, min_slip=0.12)


def test_settings_validation():
    assert EstimatorSettings().window == 10
    with pytest.raises(InvalidParameterError):
        EstimatorSettings(window=0)
    with pytest.raises(InvalidParameterError):
        EstimatorSettings(bounds_C=(2.3, 1.9))
    with pytest.raises(InvalidParameterError):
        EstimatorSettings(epsilon=0.0)


def test_bin_stats_variance_property():
    assert BinStats(0, 2, 0.8, 0.1, 0.01).variance == pytest.approx(0.01)
