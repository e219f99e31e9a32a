import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowmargin import DivergenceError, DomainError
from slowmargin.model import (
    THETA_STAR,
    DerivedQuantities,
    Parameters,
    decision_boundary,
    equilibrium_residual,
    eval_network,
    loss,
    margin_gap,
    per_instance_margins,
    robustness_margin,
)

reals = st.floats(-5, 5, allow_nan=False)
thetas = st.builds(Parameters, reals, reals, reals, reals)


def _phi_np(th, x):
    w1, b1, w2, b2 = th
    return np.maximum(w1 * x + b1, 0) - np.maximum(w2 * x + b2, 0)


@given(thetas, st.floats(-10, 10))
def test_network_matches_numpy(th, x):
    assert eval_network(th, x) == pytest.approx(_phi_np(th, x), abs=1e-12)


def test_network_rejects_nonfinite_input():
    with pytest.raises(DomainError):
        eval_network(THETA_STAR, math.nan)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_parameters_reject_nonfinite(bad):
    with pytest.raises(ValueError):
        Parameters(bad, 0, 0, 0)


def test_parameters_roundtrip():
    th = Parameters.from_seq([1, 2, 3, 4])
    assert th.astuple() == (1.0, 2.0, 3.0, 4.0)
    assert list(th) == [1.0, 2.0, 3.0, 4.0]
    assert th.scaled(2).astuple() == (2.0, 4.0, 6.0, 8.0)
    assert th.norm() == pytest.approx(math.sqrt(30))
    with pytest.raises(ValueError):
        Parameters.from_seq([1, 2, 3])


def test_derived_quantities():
    d = DerivedQuantities.of(Parameters(2.0, 1.0, -1.0, 0.5))
    assert (d.v1, d.u1, d.v2, d.u2) == (1.0, 3.0, -1.5, -0.5)
    assert d.beta1 == -0.5 and d.beta2 == 0.5
    assert DerivedQuantities.of(Parameters(0, 1, 0, 1)).beta1 is None


@settings(max_examples=200)
@given(thetas)
def test_loss_matches_mpmath(th):
    mpmath.mp.dps = 40
    p_left = _phi_np(th, -1.0)
    p_right = _phi_np(th, 1.0)
    ref = 0.5 * mpmath.exp(p_left) + 0.5 * mpmath.exp(-p_right)
    assert loss(th) == pytest.approx(float(ref), rel=1e-14)


def test_theta_star():
    assert per_instance_margins(THETA_STAR) == (1.0, 1.0)
    assert loss(THETA_STAR) == pytest.approx(math.exp(-1))
    assert robustness_margin(THETA_STAR) == pytest.approx(1.0)
    assert margin_gap(THETA_STAR) == pytest.approx(0.0, abs=1e-15)
    assert decision_boundary(THETA_STAR).points == (0.0,)


def test_loss_guard():
    with pytest.raises(DivergenceError) as err:
        loss(Parameters(0.0, 800.0, 0.0, 0.0))
    assert err.value.exponent == 800.0
    assert math.isfinite(loss(Parameters(0.0, 699.0, 0.0, 0.0)))


@pytest.mark.parametrize(
    "theta, points",
    [
        ((1, 0, -1, 0), (0.0,)),
        ((1, 1, 1, 0), (-1.0,)),  # zero on (-inf, -1], positive to the right
        ((0, 1, 0, 1), ()),  # constant zero
        ((2, -1, -1, 0), (0.0, 0.5)),
    ],
)
def test_boundary_examples(theta, points):
    bs = decision_boundary(Parameters(*theta))
    assert bs.points == pytest.approx(points)


def test_constant_network_is_degenerate():
    bs = decision_boundary(Parameters(0, 1, 0, 1))
    assert bs.degenerate and bs.points == ()
    assert robustness_margin(Parameters(0, 1, 0, 1)) == 0.0


@settings(max_examples=300, deadline=None)
@given(thetas)
def test_boundary_points_are_roots_and_cover_sign_changes(th):
    bs = decision_boundary(th)
    scale = 1 + sum(abs(v) for v in th)
    for p in bs.points:
        assert abs(eval_network(th, p)) <= 1e-9 * scale * (1 + abs(p))
    # every sign change on a fine grid lies next to a reported point
    xs = np.linspace(-20, 20, 40001)
    ys = _phi_np(th, xs)
    flips = np.nonzero(np.sign(ys[1:]) * np.sign(ys[:-1]) < 0)[0]
    for k in flips:
        assert any(xs[k] - 1e-9 <= p <= xs[k + 1] + 1e-9 for p in bs.points)


def _brute_margin(th, step=1e-4, reach=4.0):
    xs = np.arange(-reach - 1, reach + 1 + step / 2, step)
    ys = _phi_np(th, xs)
    best = math.inf
    for x0, y0 in ((-1.0, -1.0), (1.0, 1.0)):
        if y0 * eval_network(th, x0) <= 0:
            return 0.0
        bad = xs[y0 * ys <= 0]
        if bad.size:
            best = min(best, np.abs(bad - x0).min())
    return best


@pytest.mark.parametrize("seed", range(25))
def test_margin_against_grid_search(seed):
    rng = np.random.default_rng(seed)
    th = Parameters(*rng.normal(0, 1.5, 4))
    m = robustness_margin(th)
    ref = _brute_margin(th)
    if math.isinf(ref):
        assert m > 3.9
    else:
        assert m == pytest.approx(ref, abs=2e-4)


@given(thetas)
def test_margin_gap_range(th):
    g = margin_gap(th)
    assert 0.0 <= g <= 1.0
    if min(per_instance_margins(th)) <= 0:
        assert g == 1.0


def test_equilibrium_residual():
    assert equilibrium_residual(Parameters(1, 2, 3, 4)) == 1 + 3 + 2 - 4
