import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import sample_overlap_start
from slowmargin import DomainError, NotApplicable
from slowmargin.bounds import (
    GrowthConstants,
    audit_trajectory,
    bias_gap_lower,
    equilibrium_target,
    exp_recursion_bounds,
    margin_bound_start,
    nonasymptotic_margin_bound,
    rate_fit,
    specialized_assumption,
    w1_bounds,
    w2_bounds,
    weight_gap_upper,
)
from slowmargin.dynamics import run_trajectory
from slowmargin.model import Parameters
from slowmargin.trajectory import TrajectoryLog


def _iterate(a0, c1, c2, t):
    a = a0
    for _ in range(t):
        a = a + c1 * math.exp(-c2 * a) if c1 > 0 else a + c1 * math.exp(c2 * a)
    return a


@given(
    st.floats(-2, 3), st.floats(0.01, 2), st.floats(0.1, 2),
    st.integers(0, 400), st.booleans(),
)
def test_recursion_bounds_sandwich_iteration(a0, c1, c2, t, mirrored):
    if mirrored:
        a0, c1 = -a0, -c1
    lo, hi = exp_recursion_bounds(a0, c1, c2, t)
    a = _iterate(a0, c1, c2, t)
    tol = 1e-12 * (1 + abs(a))
    assert lo - tol <= a <= hi + tol


def test_recursion_examples():
    lo, hi = exp_recursion_bounds(0.0, 1.0, 1.0, 1)
    assert lo == pytest.approx(math.log(2)) and hi == pytest.approx(math.log(1 + math.e))
    assert lo <= 1.0 <= hi
    assert exp_recursion_bounds(0.0, 1.0, 1.0, 0) == (0.0, 0.0)
    lo, hi = exp_recursion_bounds(0.0, -1.0, 1.0, 1)
    assert lo <= -1.0 <= hi


def test_mirrored_recursion_example():
    # a1 = -1, a2 = -1 - e^{-1}
    lo, hi = exp_recursion_bounds(0.0, -1.0, 1.0, 2)
    a2 = _iterate(0.0, -1.0, 1.0, 2)
    assert a2 == pytest.approx(-1 - math.exp(-1))
    assert lo <= a2 <= hi


@pytest.mark.parametrize("args", [(0, 0, 1, 1), (0, 1, 0, 1), (0, 1, 1, -1)])
def test_recursion_bounds_domain(args):
    with pytest.raises(DomainError):
        exp_recursion_bounds(*args)


def test_w1_bounds_example():
    th0 = Parameters(1, 1, -1, 1)
    lo, hi = w1_bounds(th0, 0.5, 10)
    c1 = math.exp(0.5 * math.exp(-2))
    assert lo == pytest.approx(0.5 * math.log(math.e**2 + 5), rel=1e-14)
    assert lo == pytest.approx(1.2584068, abs=1e-7)
    assert hi == pytest.approx(0.5 * math.log(math.e**2 + 10 * c1), rel=1e-14)
    assert hi == pytest.approx(1.4476562, abs=1e-7)
    assert w1_bounds(th0, 0.5, 0) == (1.0, 1.0)
    w1_10 = run_trajectory(th0, 0.5, 10, record="all").theta[10, 0]
    assert lo <= w1_10 <= hi


@pytest.mark.parametrize("fn", [w1_bounds, w2_bounds])
def test_bounds_need_specialized_start(fn):
    with pytest.raises(NotApplicable):
        fn(Parameters(1, 2, -1, 2), 0.1, 10)


@pytest.mark.parametrize("seed", range(12))
@pytest.mark.parametrize("eta", [0.05, 0.5])
def test_sandwiches_hold_along_gd(seed, eta):
    th0 = sample_overlap_start(np.random.default_rng(seed))
    log = run_trajectory(th0, eta, 20_000)
    for t, row in zip(log.t, log.theta):
        lo, hi = w1_bounds(th0, eta, int(t))
        assert lo - 1e-12 * abs(row[0]) <= row[0] <= hi + 1e-12 * abs(row[0])
        lo, hi = w2_bounds(th0, eta, int(t))
        assert lo - 1e-12 * abs(row[2]) <= row[2] <= hi + 1e-12 * abs(row[2])


def test_growth_constants():
    th0 = Parameters(2.8, 0, -0.3, 0)
    g = GrowthConstants.of(th0, 0.3)
    assert g.s_star == pytest.approx(1.25)
    assert g.c1 == pytest.approx(math.exp(0.3 * math.exp(-2.8)))
    assert g.t0 == bias_gap_lower(th0, 0.3)[0]
    assert equilibrium_target(Parameters(1, 0.5, -1, 0.5)) == pytest.approx(0.0)


def test_specialized_assumption_tags():
    assert specialized_assumption(Parameters(0.5, 0.5, -0.5, 0.5)) == "overlap"
    assert specialized_assumption(Parameters(1, 0, -1, 0)) == "dead"
    assert specialized_assumption(Parameters(1, 2, -1, 2)) is None


@pytest.mark.parametrize("eta, t0", [(0.05, 140), (0.1, 70), (0.3, 24)])
def test_margin_bound_start(eta, t0):
    assert margin_bound_start(eta) == t0
    with pytest.raises(NotApplicable):
        nonasymptotic_margin_bound(eta, t0 - 1)
    assert nonasymptotic_margin_bound(eta, t0) == pytest.approx(1 / (25 + 5 * math.log(1 + 4 * eta * t0)))


def test_margin_bound_example():
    assert nonasymptotic_margin_bound(0.3, 24) == pytest.approx(1 / (25 + 5 * math.log(29.8)), rel=1e-14)
    assert nonasymptotic_margin_bound(0.3, 24) == pytest.approx(0.0238251, abs=1e-7)


def test_zero_bias_bound_gating():
    assert weight_gap_upper(Parameters(2, 0, -1, 0), 0.1, 0) == pytest.approx(5.0)
    with pytest.raises(NotApplicable):
        weight_gap_upper(Parameters(2, 0.1, -1, 0), 0.1, 0)
    with pytest.raises(NotApplicable):
        bias_gap_lower(Parameters(2.8, 0, -0.3, 0), 0.5)
    t0, floor = bias_gap_lower(Parameters(2.8, 0, -0.3, 0), 0.3)
    assert t0 == math.floor(2.5 / (0.6 * math.exp(-1.55)))
    assert floor == pytest.approx(2.5 / 11 - 0.1)


@pytest.fixture(scope="module")
def reference_log():
    return run_trajectory(Parameters(2.8, 0, -0.3, 0), 0.3, 10**6)


def test_reference_audit_is_clean(reference_log):
    report = audit_trajectory(reference_log, Parameters(2.8, 0, -0.3, 0), 0.3)
    assert report.ok, report.to_text()
    assert all(e.applicable for e in report.entries if e.bound_id != "loss_exclusion")


def test_corrupted_column_is_flagged(reference_log):
    theta = reference_log.theta.copy()
    theta[600:, 3] += 1e-3
    bad = TrajectoryLog(**{**reference_log.__dict__, "theta": theta})
    report = audit_trajectory(bad, Parameters(2.8, 0, -0.3, 0), 0.3)
    assert not report.ok
    t_bad = int(reference_log.t[600])
    assert report["u2_conserved"].first_violation == t_bad
    assert report["equilibrium_sum"].first_violation == t_bad


def test_audit_report_serializes(reference_log):
    report = audit_trajectory(reference_log, Parameters(2.8, 0, -0.3, 0), 0.3)
    doc = report.to_document()
    assert doc["schema_version"] == "1" and doc["n_violations"] == 0
    assert report.to_json_text() == report.to_json_text()
    assert "violations: 0" in report.to_text()


def test_rate_fit(reference_log):
    fit = rate_fit(reference_log, (1000, 10**6))
    assert fit.target == pytest.approx(1.25)
    assert fit.numerator_end == pytest.approx(1.25, rel=0.02)
    assert fit.product_end == pytest.approx(fit.numerator_end, rel=1e-12)
    assert fit.c_hat > 0
    with pytest.raises(DomainError):
        rate_fit(reference_log, (0, 10))
