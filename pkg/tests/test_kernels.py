import numpy as np
import pytest

from slowmargin import _kernels
from slowmargin.dynamics import gd_step, simulate, subgradient
from slowmargin.model import Parameters
from slowmargin.patterns import ActivationPattern
from slowmargin.trajectory import TerminalStatus


def _rk4_reference(th, h):
    x = th.asarray()

    def f(y):
        return -subgradient(Parameters(*y))

    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return Parameters(*(x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)))


@pytest.mark.parametrize("theta", [(1, 1.5, -1, 0.5), (2.8, 0, -0.3, 0), (1, 2, -1, 2)])
def test_gd_kernel_is_bitwise_python_step(theta):
    out = simulate(Parameters(*theta), 0.2, 500, record="all")
    th = Parameters(*theta)
    for i in range(1, 501):
        th = gd_step(th, 0.2)
        assert tuple(out["theta"][i]) == th.astuple()


@pytest.mark.parametrize("theta", [(1, 1.5, -1, 0.5), (1, 0.5, -1, 0.5)])
def test_rk4_kernel_matches_reference(theta):
    out = simulate(Parameters(*theta), 0.01, 200, method=_kernels.RK4, record="all")
    th = Parameters(*theta)
    for i in range(1, 201):
        th = _rk4_reference(th, 0.01)
        assert np.allclose(out["theta"][i], th.asarray(), rtol=1e-14, atol=1e-14)


def test_euler_is_gradient_descent():
    a = simulate(Parameters(1, 0.5, -1, 0.5), 0.01, 2000, method=_kernels.GD, record="all")
    b = simulate(Parameters(1, 0.5, -1, 0.5), 0.01, 2000, record="all")
    assert np.array_equal(a["theta"], b["theta"])


@pytest.mark.parametrize("record", ["all", "thinned", "endpoints"])
def test_chunking_does_not_change_results(record):
    th = Parameters(1, 2, -1, 2)
    a = simulate(th, 0.1, 5000, record=record)
    b = simulate(th, 0.1, 5000, record=record, chunk=8)
    for k in ("t", "theta", "loss", "code", "margin"):
        assert np.array_equal(a[k], b[k])
    assert a["final"] == b["final"]


def test_thinned_policy_rows():
    out = simulate(Parameters(1, 2, -1, 2), 0.1, 100_000)
    t = out["t"]
    assert list(t[:1000]) == list(range(1000))
    assert t[-1] == 100_000
    assert np.all(np.diff(t) > 0)
    # stays sparse past the dense prefix
    assert len(t) < 1000 + 200
    # every pattern change is on record
    codes = out["code"]
    full = simulate(Parameters(1, 2, -1, 2), 0.1, 100_000, record="all")
    change = np.nonzero(full["code"][1:] != full["code"][:-1])[0] + 1
    assert set(full["t"][change]) <= set(t)
    assert codes[-1] == ActivationPattern.OVERLAP.code


def test_endpoints_policy():
    out = simulate(Parameters(1, 2, -1, 2), 0.1, 1000, record="endpoints")
    assert list(out["t"]) == [0, 1000]


def test_loss_stop():
    out = simulate(Parameters(1, 0.5, -1, 0.5), 0.05, 10**7, loss_stop=1e-2, record="endpoints")
    assert out["status"] is TerminalStatus.LOSS_TOL
    assert out["loss"][-1] <= 1e-2
