import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import sample_overlap_start, sample_pattern
from slowmargin import ALLOWED_EDGES, ActivationPattern, ContractError, DivergenceError, PhaseGraphError
from slowmargin._scalar import loss_exponents
from slowmargin.dynamics import (
    StopCriteria,
    activity,
    classify_pattern,
    closed_form_step,
    detect_phase_transitions,
    excluded_by_loss_bound,
    gd_step,
    run_trajectory,
    subgradient,
    validate_transitions,
)
from slowmargin.model import THETA_STAR, Parameters, loss
from slowmargin.trajectory import TerminalStatus, TrajectoryLog

P = ActivationPattern
REGIMES = [P.LINEAR, P.CASE1, P.CASE2, P.CASE3, P.CASE4, P.OVERLAP, P.DEAD]


@pytest.mark.parametrize(
    "theta, pattern",
    [
        ((0.5, 0.5, -0.5, 0.5), P.OVERLAP),
        ((1, 2, -1, 2), P.LINEAR),
        ((1, 1.5, -1, 0.5), P.CASE1),
        ((1, 0.5, -1, 2), P.CASE2),
        ((3, 0, 0.2, 0.5), P.CASE3),
        ((-0.2, 0.5, -3, 0), P.CASE4),
        ((1, 0, -1, 0), P.DEAD),  # beta1 == beta2 ties go to the dead interval
        ((1, -0.5, -1, -0.5), P.DEAD),
        ((0, 0, 0, 0), P.DEGENERATE),
        ((-1, 0, 1, 0), P.DEGENERATE),
    ],
)
def test_classify_examples(theta, pattern):
    assert classify_pattern(Parameters(*theta)) is pattern


def test_activity_uses_strict_inequality():
    assert activity(THETA_STAR) == ((False, True), (True, False))


def _fd_grad(th, h=1e-6):
    x = th.asarray()
    out = []
    for e in np.eye(4):
        out.append((loss(Parameters(*(x + h * e))) - loss(Parameters(*(x - h * e)))) / (2 * h))
    return np.array(out)


@pytest.mark.parametrize("pattern", REGIMES, ids=lambda p: p.name)
def test_subgradient_matches_central_differences(pattern):
    rng = np.random.default_rng(pattern.code)
    for th in sample_pattern(rng, pattern, 50, lo=-2, hi=2, min_pre=1e-3):
        g = subgradient(th)
        fd = _fd_grad(th)
        assert np.allclose(g, fd, rtol=1e-6, atol=1e-6), (th, g, fd)


@pytest.mark.parametrize("pattern", REGIMES, ids=lambda p: p.name)
@pytest.mark.parametrize("eta", [0.05, 0.5])
def test_closed_form_equals_generic_step(pattern, eta):
    rng = np.random.default_rng(100 + pattern.code)
    for th in sample_pattern(rng, pattern, 50):
        a = gd_step(th, eta).asarray()
        b = closed_form_step(th, eta, pattern).asarray()
        assert np.allclose(a, b, rtol=1e-10, atol=1e-10)


def test_closed_form_rejects_wrong_pattern():
    with pytest.raises(ContractError):
        closed_form_step(THETA_STAR, 0.1, P.LINEAR)
    with pytest.raises(ContractError):
        closed_form_step(Parameters(0, 0, 0, 0), 0.1, P.DEGENERATE)


def test_gd_step_guards():
    with pytest.raises(ValueError):
        gd_step(THETA_STAR, 0.0)
    with pytest.raises(DivergenceError):
        gd_step(Parameters(0, 800, 0, 0), 0.1)


finite = st.floats(-4, 4, allow_nan=False)


@given(st.builds(Parameters, finite, finite, finite, finite), st.floats(1e-3, 100))
def test_each_instance_exponent_never_rises(th, eta):
    # the two inputs are orthogonal in (x, 1) space, so each instance's
    # gradient only moves preactivations at its own input, in its favour
    before = loss_exponents(*th)
    after = loss_exponents(*gd_step(th, eta))
    scale = 1e-12 * (1 + eta * math.exp(max(before)) + sum(abs(v) for v in th))
    assert after[0] <= before[0] + scale
    assert after[1] <= before[1] + scale


@given(st.builds(Parameters, finite, finite, finite, finite))
def test_excluded_configurations_have_large_loss(th):
    if excluded_by_loss_bound(th):
        assert loss(th) >= 0.5


@pytest.mark.parametrize("seed", range(10))
def test_specialized_conservation_and_monotonicity(seed):
    th = sample_overlap_start(np.random.default_rng(seed))
    v1, u2 = th.w1 - th.b1, th.w2 + th.b2
    for _ in range(200):
        nxt = gd_step(th, 0.3)
        assert nxt.w1 > th.w1 and nxt.b1 > th.b1 and nxt.b2 > th.b2 and nxt.w2 < th.w2
        assert classify_pattern(nxt) is P.OVERLAP
        th = nxt
    assert th.w1 - th.b1 == pytest.approx(v1, abs=1e-12)
    assert th.w2 + th.b2 == pytest.approx(u2, abs=1e-12)


def test_run_trajectory_matches_python_loop():
    th0 = Parameters(1, 1.5, -1, 0.5)
    log = run_trajectory(th0, 0.1, 300, record="all")
    th = th0
    for i in range(1, 301):
        th = gd_step(th, 0.1)
        assert tuple(log.theta[i]) == th.astuple()
    assert log.terminal_status is TerminalStatus.ITERATION_CAP
    assert len(log) == 301


def test_run_trajectory_divergence_is_a_status():
    log = run_trajectory(Parameters(0, 800, 0, 0), 50.0, 10)
    assert log.terminal_status is TerminalStatus.DIVERGED
    assert log.divergence_exponent == 800.0
    assert log.steps_taken == 0


def test_stop_criteria():
    log = run_trajectory(Parameters(-1, 0, -1, 0), 0.05, 100_000, stop=StopCriteria())
    assert log.terminal_status is TerminalStatus.NEVER_CLASSIFIED
    assert log.steps_taken == 10_000
    log = run_trajectory(Parameters(1.0, 0, -0.5, 0), 0.05, 5_000_000, stop=StopCriteria())
    assert log.terminal_status is TerminalStatus.EQUILIBRIUM
    f = log.final
    assert abs(f.w1 + f.w2 + f.b1 - f.b2) <= 1e-3


@pytest.mark.parametrize(
    "theta",
    [(1, 2, -1, 2), (1, 1.5, -1, 0.5), (1, 0.5, -1, 2), (3, 0, 0.2, 0.5), (-0.2, 0.5, -3, 0), (1, 0, -1, 0)],
)
def test_transitions_follow_graph_and_end_in_overlap(theta):
    log = run_trajectory(Parameters(*theta), 0.1, 20_000)
    events = validate_transitions(log)
    assert all((a, b) in ALLOWED_EDGES for _, a, b in events)
    assert log.patterns[-1] is P.OVERLAP


def test_overlap_start_has_no_transitions():
    log = run_trajectory(THETA_STAR, 0.3, 10_000)
    assert detect_phase_transitions(log) == []


def test_disallowed_edge_is_reported():
    n = 3
    log = TrajectoryLog(
        t=np.arange(n), theta=np.zeros((n, 4)), loss=np.array([0.4, 0.3, 0.2]),
        code=np.array([P.OVERLAP.code, P.OVERLAP.code, P.LINEAR.code], dtype=np.int8),
        x_star=np.zeros(n), margin=np.zeros(n), eta=0.1,
        terminal_status=TerminalStatus.ITERATION_CAP,
    )
    with pytest.raises(PhaseGraphError) as err:
        validate_transitions(log)
    assert err.value.t == 2
