import math
from dataclasses import replace

import numpy as np
import pytest

from trfc.controller import Kinematics, ScenarioState
from trfc.errors import InvalidParameterError
from trfc.simulator import (
    DEFAULT_ERROR_MODEL,
    ScenarioConfig,
    characterize_error,
    estimate_log,
    run_repeated,
    run_scenario,
    slip_for_acceleration,
)
from trfc.tire_model import TireParams, force_simplified
from trfc.vehicle_dynamics import VehicleParams

BASE = ScenarioConfig()


@pytest.fixture(scope="module")
def default_log():
    return run_scenario(BASE)


def test_default_run_is_safe_and_excites(default_log):
    log = default_log
    assert not log.collision and log.aborted is None
    assert len(log.records) == BASE.n_steps + 1
    ahead, behind = log.min_gaps(BASE.controller.vehicle_length)
    assert ahead > BASE.controller.margin and behind > BASE.controller.margin
    assert log.max_abs_slip > 0.1
    assert log.rng == "PCG64" and log.seed == 0


def test_timestamps_fixed_step(default_log):
    t = np.array([r.time for r in default_log.records])
    np.testing.assert_allclose(np.diff(t), 0.1, atol=1e-12)


def test_force_channels(default_log):
    tire = BASE.ground_truth_tire
    for r in default_log.records:
        assert r.force_front_clean == pytest.approx(force_simplified(tire, r.slip_front))
    noise = np.array([r.force_front - r.force_front_clean for r in default_log.records])
    assert 0.01 < noise.std() < 0.03


def test_determinism_and_seed_dependence(default_log):
    again = run_scenario(BASE)
    assert again == default_log
    other = run_scenario(replace(BASE, random_seed=1))
    assert other.records[0].measured_accel != default_log.records[0].measured_accel


def test_trace_and_plot_views(default_log):
    trace = default_log.trace()
    r = default_log.records[10]
    assert trace[10].vehicle_speed_m_s == r.state.ego.velocity
    assert trace[10].longitudinal_accel_m_s2 == r.measured_accel
    assert default_log.plot_rows()[10][2] == r.state.ego.position


def test_estimate_matches_ground_truth(default_log):
    est = estimate_log(BASE, default_log)
    mean, std, count = est.observation
    assert abs(mean - BASE.ground_truth_tire.D) < 0.05
    assert std > 0.0 and count >= 2
    assert all(math.isfinite(b.mse_vs_reference) for b in est.bins)


def test_standstill_start_is_gated():
    init = ScenarioState(Kinematics(0.0, 0.0), Kinematics(500.0, 0.0), Kinematics(-30.0, 0.0))
    log = run_scenario(replace(BASE, initial=init, duration=3.0))
    assert not log.collision
    gated = [r for r in log.records if r.state.ego.velocity <= BASE.controller.v_threshold]
    assert gated and len(gated) < len(log.records)
    # below the gate only comfort-level nominal following runs
    assert all(abs(r.applied_accel) <= BASE.idm.comfort_accel + 1e-9 for r in gated)
    assert all(abs(r.slip_front) < 0.05 for r in gated)


def test_baseline_keeps_slip_low():
    log = run_scenario(replace(BASE, excitation=False))
    assert not log.collision
    assert log.max_abs_slip < 0.05


def test_collision_is_detected_and_stops_the_run():
    init = ScenarioState(Kinematics(0.0, 20.0), Kinematics(6.0, 20.0), Kinematics(-30.0, 20.0))
    log = run_scenario(replace(BASE, initial=init))
    assert log.collision and log.collision_time == 0.0
    assert len(log.records) == 1


def test_slip_for_acceleration_inverts_dynamics():
    veh = VehicleParams()
    tire = TireParams(10.0, 2.0, 0.85)
    kappa = slip_for_acceleration(tire, veh, 20.0, 3.0)
    drag = 0.5 * 1.2 * 0.3 * 2.2 * 400.0
    assert force_simplified(tire, kappa) * veh.gravity * veh.mass - drag == pytest.approx(3.0 * veh.mass)
    assert slip_for_acceleration(tire, veh, 0.0, -2.0) == 0.0
    assert slip_for_acceleration(tire, veh, 20.0, 50.0) == tire.critical_slip


def test_run_repeated_single_run_variance():
    runs = run_repeated(replace(BASE, duration=6.0), 1)
    assert runs.errors == [None]
    assert runs.location.variance == pytest.approx(runs.observations[0][1] ** 2)
    assert runs.location.location_id == "sim"


def test_run_repeated_seeds_and_errors():
    runs = run_repeated(replace(BASE, duration=6.0, random_seed=5), 2, location_id="road-7")
    assert [log.seed for log in runs.logs] == [5, 6]
    assert runs.location.n_observations == 2
    assert runs.location.location_id == "road-7"
    with pytest.raises(InvalidParameterError):
        run_repeated(BASE, 0)


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        ScenarioConfig(duration=0.0)
    with pytest.raises(InvalidParameterError):
        ScenarioConfig(sensor_noise_std=-0.1)


@pytest.mark.slow
def test_frozen_error_model_matches_characterisation():
    pairs, model = characterize_error(n_trials=60, seed=0)
    errors = [e for _, e in pairs]
    assert errors[0] > errors[-1]
    for a in (0.5, 2.0, 4.0, 8.0):
        assert DEFAULT_ERROR_MODEL(a) == pytest.approx(model(a), abs=5e-3)


@pytest.mark.slow
def test_repeated_runs_are_consistent():
    runs = run_repeated(BASE, 20)
    assert all(e is None for e in runs.errors)
    loc = runs.location
    assert abs(loc.mean - BASE.ground_truth_tire.D) < 2 * math.sqrt(loc.variance)
