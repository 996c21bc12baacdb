import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trfc.errors import BranchOutOfDomainError, InvalidParameterError, NoInteriorPeakError
from trfc.tire_model import (
    C_MIN_INTERIOR_PEAK,
    TireParams,
    critical_slip_ratio,
    force_derivative,
    force_full,
    force_simplified,
    invert_rising_branch,
    peak_trfc,
    slip_ratio,
)

NOMINAL = TireParams(10.0, 2.0, 0.85)

# 50-digit mpmath evaluation of tan(tan(pi / 2C)) / B
CSR_B10 = {
    1.9: 0.18998671348827874,
    2.0: 0.15574077246549022,
    2.1: 0.13349156050690964,
    2.2: 0.1176953885564848,
    2.3: 0.10579723144257542,
}


def test_force_golden_value():
    # 50-digit mpmath: 0.85 sin(2 atan(atan(0.2)))
    assert force_simplified(NOMINAL, 0.02) == pytest.approx(0.3229872512242843, abs=1e-15)


def test_force_is_odd_and_zero_at_origin():
    k = np.linspace(-1, 1, 201)
    np.testing.assert_allclose(force_simplified(NOMINAL, -k), -force_simplified(NOMINAL, k), atol=1e-15)
    assert force_simplified(NOMINAL, 0.0) == 0.0


def test_scalar_in_scalar_out():
    assert isinstance(force_simplified(NOMINAL, 0.1), float)
    assert isinstance(force_derivative(NOMINAL, 0.1), float)
    assert force_simplified(NOMINAL, [0.1, 0.2]).shape == (2,)


@pytest.mark.parametrize("C,expected", sorted(CSR_B10.items()))
def test_critical_slip_ratio_b10(C, expected):
    assert critical_slip_ratio(10.0, C) == pytest.approx(expected, rel=1e-13)


def test_critical_slip_is_stationary_and_peak_equals_D():
    k = NOMINAL.critical_slip
    assert abs(force_derivative(NOMINAL, k)) < 1e-12
    assert force_simplified(NOMINAL, k) == pytest.approx(0.85, abs=1e-15)
    assert peak_trfc(NOMINAL) == 0.85


def test_non_principal_branch_rejected():
    with pytest.raises(BranchOutOfDomainError):
        critical_slip_ratio(10.0, 2.0, n=1)
    with pytest.raises(BranchOutOfDomainError):
        critical_slip_ratio(10.0, 1.5, n=0)


def test_no_interior_peak_reports_edge_value():
    params = TireParams(10.0, 1.5, 0.9)
    assert 1.5 < C_MIN_INTERIOR_PEAK
    with pytest.raises(NoInteriorPeakError) as info:
        peak_trfc(params)
    assert info.value.edge_value == pytest.approx(force_simplified(params, 1.0))


def test_interior_peak_threshold():
    assert C_MIN_INTERIOR_PEAK == pytest.approx(math.pi / (2 * math.atan(math.pi / 2)))
    assert peak_trfc(TireParams(10.0, 1.7, 0.7)) == 0.7
    # just above the threshold the stationary point lies far beyond kappa = 1
    assert critical_slip_ratio(10.0, C_MIN_INTERIOR_PEAK + 1e-6) > 1.0
    with pytest.raises(NoInteriorPeakError):
        peak_trfc(TireParams(10.0, C_MIN_INTERIOR_PEAK + 1e-6, 0.7))


@pytest.mark.parametrize("kwargs", [
    dict(B=0.0, C=2.0, D=0.8), dict(B=10.0, C=-1.0, D=0.8),
    dict(B=10.0, C=2.0, D=-0.1), dict(B=math.nan, C=2.0, D=0.8),
])
def test_params_validation(kwargs):
    with pytest.raises(InvalidParameterError):
        TireParams(**kwargs)


def test_zero_peak_factor_is_allowed():
    assert force_simplified(TireParams(10.0, 2.0, 0.0), 0.1) == 0.0


def test_slip_ratio_signs_and_standstill():
    assert slip_ratio(70.0, 0.3, 20.0) == pytest.approx(0.05)
    assert slip_ratio(60.0, 0.3, 20.0) == pytest.approx(-0.1)
    # epsilon floor keeps standstill finite
    assert slip_ratio(1.0, 0.3, 0.0, epsilon=0.1) == pytest.approx(3.0)
    with pytest.raises(InvalidParameterError):
        slip_ratio(1.0, 0.0, 1.0)
    with pytest.raises(InvalidParameterError):
        slip_ratio(1.0, 0.3, 1.0, epsilon=0.0)


def test_full_formula_reduces_when_e_is_one():
    k = np.linspace(-1, 1, 101)
    np.testing.assert_allclose(force_full(NOMINAL, k), force_simplified(NOMINAL, k), atol=1e-15)
    assert force_full(TireParams(10.0, 2.0, 0.85, E=0.5), 0.1) != force_simplified(NOMINAL, 0.1)


def test_inversion_saturates_at_peak():
    assert invert_rising_branch(NOMINAL, 0.9) == NOMINAL.critical_slip
    assert invert_rising_branch(NOMINAL, -2.0) == -NOMINAL.critical_slip
    assert invert_rising_branch(TireParams(10.0, 2.0, 0.0), 0.3) == 0.0


@settings(max_examples=200, deadline=None)
@given(
    B=st.floats(4.0, 20.0), C=st.floats(1.6, 2.8), D=st.floats(0.1, 1.3),
    frac=st.floats(-0.999, 0.999),
)
def test_inversion_round_trip(B, C, D, frac):
    params = TireParams(B, C, D)
    kappa = invert_rising_branch(params, frac * D)
    assert abs(kappa) <= params.critical_slip * (1 + 1e-12)
    assert force_simplified(params, kappa) == pytest.approx(frac * D, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(B=st.floats(1.0, 30.0), C=st.floats(1.6, 3.0), D=st.floats(0.0, 1.5),
       kappa=st.floats(-1.0, 1.0))
def test_force_bounded_by_peak(B, C, D, kappa):
    assert abs(force_simplified(TireParams(B, C, D), kappa)) <= D + 1e-15
