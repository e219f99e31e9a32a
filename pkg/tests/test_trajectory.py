import json
import math

import numpy as np
import pytest

from slowmargin.dynamics import run_trajectory
from slowmargin.model import Parameters
from slowmargin.trajectory import CSV_HEADER, TerminalStatus, TrajectoryLog


@pytest.fixture(scope="module")
def log():
    return run_trajectory(Parameters(1, 2, -1, 2), 0.1, 5000)


def test_csv_roundtrip(tmp_path, log):
    csv_path, json_path = log.write(tmp_path / "run")
    back = TrajectoryLog.read_csv(csv_path, 0.1)
    assert np.array_equal(back.t, log.t)
    assert np.array_equal(back.theta, log.theta)
    assert np.array_equal(back.loss, log.loss)
    assert np.array_equal(back.code, log.code)
    assert np.array_equal(np.isnan(back.x_star), np.isnan(log.x_star))
    doc = json.loads(open(json_path).read())
    assert doc["schema_version"] == "1"
    assert doc["terminal_status"] == TerminalStatus.ITERATION_CAP.value


def test_csv_header(log):
    assert log.to_csv_text().splitlines()[0] == ",".join(CSV_HEADER)


def test_undefined_boundary_is_empty_field():
    log = run_trajectory(Parameters(0, 1, 0, 1), 0.1, 3)
    row = log.to_csv_text().splitlines()[1].split(",")
    assert math.isnan(log.x_star[0]) and row[6] == ""


def test_step_accessors(log):
    s = log.step(0)
    assert s.t == 0 and s.theta == Parameters(1, 2, -1, 2)
    assert log.last == log.final
    assert len(log.steps) == len(log)


def test_bad_csv(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        TrajectoryLog.read_csv(p, 0.1)


def test_json_is_deterministic(log):
    assert log.to_json_text() == run_trajectory(Parameters(1, 2, -1, 2), 0.1, 5000).to_json_text()
