import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from trfc.cli import main
from trfc.config import read_error_model
from trfc.estimator import ErrorModel
from trfc.tire_model import TireParams, force_simplified
from trfc.traces import BIN_FIELDS, TRACE_FIELDS, TraceRecord, read_table, write_csv, write_trace
from trfc.vehicle_dynamics import VehicleParams, drag_force

SHORT = '[scenario]\nduration_s = 5.0\n'


def _run(capsys, *argv):
    status = main([str(a) for a in argv])
    err = capsys.readouterr().err
    return status, err


def _config(tmp_path, text=SHORT, name="s.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def synthetic_trace(tire, kappas, v=20.0, dt=0.1):
    """Trace whose wheel speeds and acceleration encode ``force(kappa)`` exactly."""
    veh = VehicleParams()
    rows = []
    for i, k in enumerate(kappas):
        omega = v * (1.0 + k) / veh.rolling_radius
        mu = float(force_simplified(tire, k))
        accel = (mu * veh.mass * veh.gravity - drag_force(veh, v)) / veh.mass
        rows.append(TraceRecord(i * dt, omega, omega, v, accel))
    return rows


def test_simulate_default_outputs(tmp_path, capsys):
    status, err = _run(capsys, "simulate", "--config", _config(tmp_path), "--output-dir", tmp_path / "o")
    assert status == 0, err
    for name in ("trace.csv", "bins.csv", "estimates.csv", "observation.csv", "plot.csv",
                 "log.csv", "location.json", "runs.json"):
        assert (tmp_path / "o" / name).exists()
    with open(tmp_path / "o" / "trace.csv") as fh:
        assert tuple(next(csv.reader(fh))) == TRACE_FIELDS
    runs = json.loads((tmp_path / "o" / "runs.json").read_text())
    assert runs["runs"][0]["rng"] == "PCG64"


def test_simulate_bundled_config(tmp_path, capsys):
    status, err = _run(capsys, "simulate", "--output-dir", tmp_path)
    assert status == 0, err
    loc = json.loads((tmp_path / "location.json").read_text())
    assert abs(loc["mean"] - 0.85) < 0.05


def test_simulate_invalid_config_names_field(tmp_path, capsys):
    cfg = _config(tmp_path, "[controller]\na_min_m_s2 = 0.5\n")
    status, err = _run(capsys, "simulate", "--config", cfg, "--output-dir", tmp_path / "o")
    assert status == 2
    assert "a_min" in err and ":2:" in err and "E_CONFIG" in err
    assert len(err.strip().splitlines()) == 1


def test_seed_override_is_deterministic(tmp_path, capsys):
    cfg = _config(tmp_path)
    for name, seed in (("a", 3), ("b", 3), ("c", 4)):
        assert _run(capsys, "simulate", "--config", cfg, "--seed", seed, "--output-dir", tmp_path / name)[0] == 0
    a, b, c = ((tmp_path / n / "trace.csv").read_text() for n in "abc")
    assert a == b != c


def test_simulate_multiple_runs(tmp_path, capsys):
    status, _ = _run(capsys, "simulate", "--config", _config(tmp_path), "--runs", 2,
                     "--output-dir", tmp_path / "o")
    assert status == 0
    assert (tmp_path / "o" / "run_000" / "trace.csv").exists()
    assert json.loads((tmp_path / "o" / "location.json").read_text())["n_observations"] == 2


def test_simulate_collision_exits_3_and_keeps_outputs(tmp_path, capsys):
    cfg = _config(tmp_path, SHORT + "[initial]\npreceding_position_m = 6.0\n")
    status, err = _run(capsys, "simulate", "--config", cfg, "--output-dir", tmp_path / "o")
    assert status == 3 and "collision" in err
    assert (tmp_path / "o" / "trace.csv").exists()


def test_estimate_noiseless_synthetic_trace(tmp_path, capsys):
    tire = TireParams(10.0, 2.0, 0.85)
    write_trace(tmp_path / "t.csv", synthetic_trace(tire, np.linspace(0.02, 0.25, 40)))
    status, err = _run(capsys, "estimate", tmp_path / "t.csv", "--output-dir", tmp_path / "o")
    assert status == 0, err
    rows = read_table(tmp_path / "o" / "estimates.csv", ("peak_trfc",))
    assert len(rows) == 40
    assert all(abs(r["peak_trfc"] - 0.85) < 1e-2 for r in rows)


def test_estimate_low_slip_warns(tmp_path, capsys):
    write_trace(tmp_path / "t.csv", synthetic_trace(TireParams(10, 2, 0.85), np.full(30, 0.004)))
    status, err = _run(capsys, "estimate", tmp_path / "t.csv", "--output-dir", tmp_path / "o")
    assert status == 0
    assert "insufficient excitation" in err
    assert read_table(tmp_path / "o" / "estimates.csv", ("peak_trfc",)) == []


def test_estimate_schema_errors(tmp_path, capsys):
    header = ",".join(TRACE_FIELDS)
    (tmp_path / "empty.csv").write_text(header + "\n")
    status, err = _run(capsys, "estimate", tmp_path / "empty.csv")
    assert status == 2 and "zero rows" in err

    (tmp_path / "back.csv").write_text(header + "\n0.0,1,1,1,0\n0.2,1,1,1,0\n0.1,1,1,1,0\n")
    status, err = _run(capsys, "estimate", tmp_path / "back.csv")
    assert status == 2 and "row 4" in err

    (tmp_path / "extra.csv").write_text(header + ",brake\n0.0,1,1,1,0,0\n")
    status, err = _run(capsys, "estimate", tmp_path / "extra.csv")
    assert status == 2 and "unexpected column(s) brake" in err

    status, err = _run(capsys, "estimate", tmp_path / "missing.csv")
    assert status == 2 and "E_IO" in err


def _bins_file(path, accel, error, count=5):
    write_csv(path, BIN_FIELDS, [[3, count, 0.85, 0.01, error * error, accel]])


def test_fit_error_model_recovers_known_model(tmp_path, capsys):
    truth = ErrorModel(0.1, 3.0, 0.01)
    files = []
    for i, a in enumerate((1.0, 3.0, 6.0)):
        files.append(tmp_path / f"b{i}.csv")
        _bins_file(files[-1], a, truth(a))
    out = tmp_path / "em.json"
    status, err = _run(capsys, "fit-error-model", *files, "-o", out)
    assert status == 0, err
    fitted = read_error_model(out)
    assert fitted.amplitude == pytest.approx(0.1, abs=1e-3)
    assert fitted.width == pytest.approx(3.0, abs=1e-3)
    assert fitted.floor == pytest.approx(0.01, abs=1e-3)
    # record round trip
    record = json.loads(out.read_text())
    again = ErrorModel(record["amplitude"], record["width_m_s2"], record["floor"])
    assert again(2.5) == fitted(2.5)


def test_fit_error_model_needs_distinct_accelerations(tmp_path, capsys):
    files = []
    for i in range(3):
        files.append(tmp_path / f"b{i}.csv")
        _bins_file(files[-1], 2.0, 0.05)
    status, err = _run(capsys, "fit-error-model", *files, "-o", tmp_path / "em.json")
    assert status == 2 and "distinct" in err


def _obs_file(path, rows):
    write_csv(path, ("mean", "std", "count"), rows)


def test_aggregate_arithmetic_and_order(tmp_path, capsys):
    _obs_file(tmp_path / "a.csv", [[0.8, 0.1, 5]])
    _obs_file(tmp_path / "b.csv", [[0.9, 0.1, 5]])
    assert _run(capsys, "aggregate", tmp_path / "a.csv", tmp_path / "b.csv",
                "--location-id", "L1", "-o", tmp_path / "ab.json")[0] == 0
    assert _run(capsys, "aggregate", tmp_path / "b.csv", tmp_path / "a.csv",
                "--location-id", "L1", "-o", tmp_path / "ba.json")[0] == 0
    ab = json.loads((tmp_path / "ab.json").read_text())
    assert ab["variance"] == 0.005
    assert ab["location_id"] == "L1"
    assert (tmp_path / "ab.json").read_text() == (tmp_path / "ba.json").read_text()

    assert _run(capsys, "aggregate", tmp_path / "a.csv", "--location-id", "L1",
                "-o", tmp_path / "a.json")[0] == 0
    assert json.loads((tmp_path / "a.json").read_text())["variance"] == pytest.approx(0.01)


def test_aggregate_rejects_nonpositive_std(tmp_path, capsys):
    _obs_file(tmp_path / "a.csv", [[0.8, 0.1, 5], [0.8, 0.0, 5]])
    status, err = _run(capsys, "aggregate", tmp_path / "a.csv", "--location-id", "x")
    assert status == 2 and "row 3" in err and "std" in err


def test_aggregate_skips_nan_std(tmp_path, capsys):
    _obs_file(tmp_path / "a.csv", [[0.8, 0.1, 5], [0.7, math.nan, 1]])
    status, err = _run(capsys, "aggregate", tmp_path / "a.csv", "--location-id", "x",
                       "-o", tmp_path / "o.json")
    assert status == 0 and "skipped" in err
    assert json.loads((tmp_path / "o.json").read_text())["n_observations"] == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "trfc", "aggregate", "nope.csv", "--location-id", "x"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 2
    assert proc.stderr.startswith("trfc: error: E_IO:")
