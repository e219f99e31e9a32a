"""Activation patterns, gradient steps and gradient-descent trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels, _scalar
from .errors import ContractError, DivergenceError, PhaseGraphError
from .model import Parameters
from .patterns import ALLOWED_EDGES, ActivationPattern
from .trajectory import TerminalStatus, TrajectoryLog

P = ActivationPattern


def activity(theta: Parameters) -> tuple:
    """``activity[i][j]`` is True when neuron j is strictly active on point i."""
    w1, b1, w2, b2 = theta
    return ((-w1 + b1 > 0, -w2 + b2 > 0), (w1 + b1 > 0, w2 + b2 > 0))


def classify_pattern(theta: Parameters) -> ActivationPattern:
    """Tag the activation regime from strict activity and the slope signs.

    Zero preactivations count as inactive, so points on a kink still get
    a regime tag whenever the strict booleans match one; ties
    ``beta1 == beta2`` go to the dead-interval regime.
    """
    return ActivationPattern.from_code(_scalar.pattern_code(*theta))


def subgradient(theta: Parameters) -> np.ndarray:
    """Gradient of the loss with ReLU'(0) = 0, as ``(dw1, db1, dw2, db2)``."""
    _, g1, g2, g3, g4, worst = _scalar.loss_and_grad(*theta)
    if worst > _scalar.EXP_GUARD:
        raise DivergenceError(worst)
    return np.array([g1, g2, g3, g4])


def gd_step(theta: Parameters, eta: float) -> Parameters:
    """One gradient-descent step ``theta - eta * grad``."""
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    _, g1, g2, g3, g4, worst = _scalar.loss_and_grad(*theta)
    if worst > _scalar.EXP_GUARD:
        raise DivergenceError(worst)
    w1, b1, w2, b2 = theta
    new = (w1 - eta * g1, b1 - eta * g2, w2 - eta * g3, b2 - eta * g4)
    if not all(math.isfinite(v) for v in new):
        raise DivergenceError(math.inf)
    return Parameters(*new)


def closed_form_step(theta: Parameters, eta: float, pattern: ActivationPattern) -> Parameters:
    """Apply the explicit update system of the given regime.

    Each regime reduces the loss gradient to one or two exponentials of
    the diagonal coordinates; this is an independent route to
    :func:`gd_step` used to cross-check it.

    Raises
    ------
    ContractError
        If ``pattern`` is not the regime of ``theta`` or is degenerate.
    """
    actual = classify_pattern(theta)
    if pattern is not actual or pattern is P.DEGENERATE:
        raise ContractError(f"pattern {pattern.value} does not match {actual.value}")
    w1, b1, w2, b2 = theta
    half = 0.5 * eta
    if pattern.specialized:
        right = half * math.exp(-w1 - b1)
        left = half * math.exp(w2 - b2)
        return Parameters(w1 + right, b1 + right, w2 - left, b2 + left)
    if pattern in (P.CASE1, P.CASE4):
        # neuron 1 active on both points, neuron 2 only on x = -1
        ea = half * math.exp(-w1 + b1 + w2 - b2)
        eb = half * math.exp(-w1 - b1)
        return Parameters(w1 + ea + eb, b1 - ea + eb, w2 - ea, b2 + ea)
    if pattern in (P.CASE2, P.CASE3):
        # neuron 1 only on x = +1, neuron 2 active on both points
        ec = half * math.exp(w2 - b2)
        ed = half * math.exp(w2 + b2 - w1 - b1)
        return Parameters(w1 + ed, b1 + ed, w2 - ec - ed, b2 + ec - ed)
    # both neurons active on both points
    a = math.exp(-w1 + b1 + w2 - b2)
    b = math.exp(-w1 - b1 + w2 + b2)
    return Parameters(
        w1 + half * (a + b), b1 + half * (b - a), w2 - half * (a + b), b2 + half * (a - b)
    )


def excluded_by_loss_bound(theta: Parameters) -> bool:
    """True when a sign configuration forces ``loss >= 0.5``.

    Each listed configuration leaves one training point with a
    non-positive signed output, whose loss term alone is at least 0.5.
    """
    w1, b1, w2, b2 = theta
    if (w1 > 0 and -b1 / w1 >= 1) or (w2 < 0 and -b2 / w2 <= -1):
        return True
    if (w1 < 0 and -b1 / w1 <= 1) or (w2 > 0 and -b2 / w2 >= -1):
        return True
    if w1 <= 0 and w2 >= 0:
        return True
    if (w1 == 0 and b1 <= 0) or (w2 == 0 and b2 <= 0):
        return True
    return False


@dataclass(frozen=True)
class StopCriteria:
    """Early-stopping rules; ``None`` disables a rule.

    Attributes
    ----------
    classify_cap : int or None
        Give up as never classified if the loss has not dropped below 0.5
        by this iteration.
    equilibrium_tol : float or None
        Stop once classified and ``|w1 + w2 + b1 - b2|`` is within this.
    """

    classify_cap: Optional[int] = 10_000
    equilibrium_tol: Optional[float] = 1e-3

    @classmethod
    def disabled(cls) -> "StopCriteria":
        return cls(classify_cap=None, equilibrium_tol=None)


_POLICIES = {
    "all": _kernels.RECORD_ALL,
    "thinned": _kernels.RECORD_THINNED,
    "endpoints": _kernels.RECORD_ENDPOINTS,
}

_STATUS = {
    _kernels.ITERATION_CAP: TerminalStatus.ITERATION_CAP,
    _kernels.EQUILIBRIUM: TerminalStatus.EQUILIBRIUM,
    _kernels.DIVERGED: TerminalStatus.DIVERGED,
    _kernels.NEVER_CLASSIFIED: TerminalStatus.NEVER_CLASSIFIED,
    _kernels.LOSS_TOL: TerminalStatus.LOSS_TOL,
}


def simulate(
    theta0: Parameters,
    step: float,
    n_steps: int,
    *,
    method: int = _kernels.GD,
    record: str = "thinned",
    classify_cap: Optional[int] = None,
    equilibrium_tol: Optional[float] = None,
    loss_stop: Optional[float] = None,
    chunk: int = 1 << 16,
) -> dict:
    """Drive the compiled loop and collect its recorded rows.

    Returns a dict of column arrays plus ``status``, ``final`` (the last
    state reached), ``steps`` (iterations taken) and ``exponent`` (set on
    divergence).
    """
    policy = _POLICIES[record]
    state = np.array(theta0.astuple(), dtype=np.float64)
    ctrl = np.array([0.0, float(_kernels.FULL_RECORD_STEPS), -1.0, 0.0, 0.0])
    cap = -1 if classify_cap is None else int(classify_cap)
    tol = -1.0 if equilibrium_tol is None else float(equilibrium_tol)
    lstop = -1.0 if loss_stop is None else float(loss_stop)
    size = max(8, min(chunk, n_steps + 2))
    parts = []
    while True:
        bufs = (
            np.empty(size, dtype=np.int64),
            np.empty((size, 4)),
            np.empty(size),
            np.empty(size, dtype=np.int8),
            np.empty(size),
            np.empty(size),
        )
        status, rows = _kernels.advance(
            state, ctrl, float(step), method, policy, int(n_steps), cap, tol, lstop, *bufs
        )
        parts.append(tuple(b[:rows] for b in bufs))
        if status != _kernels.BUFFER_FULL:
            break
    cols = [np.concatenate([p[k] for p in parts]) for k in range(6)]
    return {
        "t": cols[0],
        "theta": cols[1],
        "loss": cols[2],
        "code": cols[3],
        "x_star": cols[4],
        "margin": cols[5],
        "status": _STATUS[status],
        "final": Parameters(*state),
        "steps": int(ctrl[0]),
        "exponent": float(ctrl[4]),
    }


def run_trajectory(
    theta0: Parameters,
    eta: float,
    max_steps: int,
    stop: Optional[StopCriteria] = None,
    record: str = "thinned",
) -> TrajectoryLog:
    """Iterate gradient descent and log the trajectory.

    Parameters
    ----------
    theta0 : Parameters
        Starting point.
    eta : float
        Step size.
    max_steps : int
        Maximum number of steps; the log covers ``t = 0 .. max_steps``.
    stop : StopCriteria, optional
        Early-stopping rules.  The default runs all ``max_steps``.
    record : {"thinned", "all", "endpoints"}
        Thinned logs keep every step below 1000, then geometrically spaced
        steps (ratio 1.1), plus every pattern change and the last step.

    Returns
    -------
    TrajectoryLog
        On divergence the log ends at the last finite state and its status
        is ``Diverged``; no exception is raised.
    """
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    if max_steps < 1:
        raise ValueError(f"max_steps must be at least 1, got {max_steps}")
    stop = stop or StopCriteria.disabled()
    out = simulate(
        theta0,
        eta,
        max_steps,
        record=record,
        classify_cap=stop.classify_cap,
        equilibrium_tol=stop.equilibrium_tol,
    )
    config = {
        "kind": "gd",
        "theta0": list(theta0.astuple()),
        "eta": float(eta),
        "max_steps": int(max_steps),
        "classify_cap": stop.classify_cap,
        "equilibrium_tol": stop.equilibrium_tol,
        "record": record,
    }
    return TrajectoryLog.from_columns(out, eta=float(eta), config=config)


def detect_phase_transitions(log: TrajectoryLog) -> list:
    """Pattern-change events ``(t, from, to)`` between consecutive records."""
    codes = log.code
    idx = np.nonzero(codes[1:] != codes[:-1])[0] + 1
    return [
        (int(log.t[i]), ActivationPattern.from_code(codes[i - 1]), ActivationPattern.from_code(codes[i]))
        for i in idx
    ]


def validate_transitions(log: TrajectoryLog) -> list:
    """Check every pattern change after the loss drops below 0.5.

    Returns the transition list.  Raises
    :class:`~slowmargin.errors.PhaseGraphError` naming the first step that
    uses an edge outside :data:`ALLOWED_EDGES`.
    """
    events = detect_phase_transitions(log)
    below = np.nonzero(log.loss < 0.5)[0]
    if below.size == 0:
        return events
    t_classified = log.t[below[0]]
    for t, src, dst in events:
        if t > t_classified and (src, dst) not in ALLOWED_EDGES:
            raise PhaseGraphError(t, src.value, dst.value)
    return events
