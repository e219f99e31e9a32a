"""Closed-form growth bounds, equilibrium limits and trajectory audits.

Every bound raises :class:`~slowmargin.errors.NotApplicable` when its
hypotheses fail; :func:`audit_trajectory` turns that into a verdict.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import classify_pattern, excluded_by_loss_bound
from .errors import DomainError, NotApplicable
from .model import Parameters
from .patterns import ALLOWED_EDGES, ActivationPattern
from .trajectory import SCHEMA_VERSION, TrajectoryLog


def _log_sum(log_a: float, log_b: float) -> float:
    """``ln(e^log_a + e^log_b)`` without overflow."""
    return float(np.logaddexp(log_a, log_b))


def _log_pos(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def exp_recursion_bounds(a0: float, c1: float, c2: float, t: int) -> tuple:
    """Two-sided bound on the exponential recursion after ``t`` steps.

    For ``c1 > 0`` the recursion is ``a[t+1] = a[t] + c1 exp(-c2 a[t])``
    and::

        ln(e^{c2 a0} + t c2 c1) / c2 <= a[t]
            <= ln(e^{c2 a0} + t c2 c1 exp(c2 c1 e^{-c2 a0})) / c2

    For ``c1 < 0`` it is the mirrored recursion
    ``a[t+1] = a[t] + c1 exp(c2 a[t])``, whose negation is the positive
    case started at ``-a0``; the bounds are the negated positive ones.

    Returns
    -------
    (lower, upper) : tuple of float
    """
    if c1 == 0:
        raise DomainError("c1 must be nonzero")
    if not c2 > 0:
        raise DomainError(f"c2 must be positive, got {c2}")
    if t < 0:
        raise DomainError(f"t must be non-negative, got {t}")
    if c1 < 0:
        lo, hi = exp_recursion_bounds(-a0, -c1, c2, t)
        return -hi, -lo
    start = c2 * a0
    drive = _log_pos(t * c2 * c1)
    lower = _log_sum(start, drive) / c2
    upper = _log_sum(start, drive + c2 * c1 * math.exp(-start)) / c2
    return lower, upper


def specialized_assumption(theta: Parameters) -> Optional[str]:
    """Which specialized regime ``theta`` is in, if any.

    ``"overlap"`` when ``beta1 < beta2`` and ``"dead"`` when
    ``beta2 <= beta1``, with neuron 1 active only on ``x = +1`` and
    neuron 2 only on ``x = -1``.  A zero preactivation counts as
    inactive, so starts on the edge such as ``beta1 = -1`` qualify; their
    updates follow the same closed form.
    """
    tag = classify_pattern(theta)
    if tag is ActivationPattern.OVERLAP:
        return "overlap"
    if tag is ActivationPattern.DEAD:
        return "dead"
    return None


def _require_specialized(theta0: Parameters, eta: float):
    if not eta > 0:
        raise NotApplicable(f"eta must be positive, got {eta}")
    if specialized_assumption(theta0) is None:
        raise NotApplicable("start is not a specialized configuration")


@dataclass(frozen=True)
class GrowthConstants:
    """Constants of the specialized-regime growth bounds.

    ``c1`` and ``c2`` widen the upper bounds on ``w1`` and ``-w2``;
    ``s_star`` is the equilibrium limit of ``w1 + w2`` and ``b2 - b1``;
    ``t0`` is the start of the bias-gap bound when it applies.
    """

    c1: float
    c2: float
    s_star: float
    t0: Optional[int] = None

    @classmethod
    def of(cls, theta0: Parameters, eta: float) -> "GrowthConstants":
        d = theta0.derived()
        c1 = math.exp(eta * math.exp(d.v1 - 2 * theta0.w1))
        c2 = math.exp(eta * math.exp(-d.u2 + 2 * theta0.w2))
        try:
            t0 = bias_gap_lower(theta0, eta)[0]
        except NotApplicable:
            t0 = None
        return cls(c1, c2, equilibrium_target(theta0), t0)


def w1_bounds(theta0: Parameters, eta: float, t: int) -> tuple:
    """Logarithmic sandwich on ``w1(t)`` in the specialized regime.

    ``0.5 ln(e^{2 w1} + eta e^{v1} t) <= w1(t) <=
    0.5 ln(e^{2 w1} + 2 eta C1 e^{v1} t)`` with all quantities at the
    start and ``C1 = exp(eta e^{v1} e^{-2 w1})``.
    """
    _require_specialized(theta0, eta)
    w1 = theta0.w1
    v1 = theta0.derived().v1
    log_c1 = eta * math.exp(v1 - 2 * w1)
    log_rate = _log_pos(eta * t) + v1
    lower = 0.5 * _log_sum(2 * w1, log_rate)
    upper = 0.5 * _log_sum(2 * w1, log_rate + math.log(2.0) + log_c1)
    return lower, upper


def w2_bounds(theta0: Parameters, eta: float, t: int) -> tuple:
    """Mirror of :func:`w1_bounds` for the decreasing slope ``w2(t)``.

    ``-0.5 ln(e^{-2 w2} + 2 eta e^{-u2} C2 t) <= w2(t) <=
    -0.5 ln(e^{-2 w2} + eta e^{-u2} t)`` with
    ``C2 = exp(eta e^{-u2} e^{2 w2})``.
    """
    _require_specialized(theta0, eta)
    w2 = theta0.w2
    u2 = theta0.derived().u2
    log_c2 = eta * math.exp(-u2 + 2 * w2)
    log_rate = _log_pos(eta * t) - u2
    lower = -0.5 * _log_sum(-2 * w2, log_rate + math.log(2.0) + log_c2)
    upper = -0.5 * _log_sum(-2 * w2, log_rate)
    return lower, upper


def equilibrium_target(theta0: Parameters) -> float:
    """Limit ``(v1 + u2) / 2`` of both ``b2 - b1`` and ``w1 + w2``."""
    return 0.5 * (theta0.w1 - theta0.b1 + theta0.w2 + theta0.b2)


def _zero_bias(theta0: Parameters) -> bool:
    return theta0.b1 == 0.0 and theta0.b2 == 0.0


def weight_gap_upper(theta0: Parameters, eta: float, t: int) -> float:
    """Upper bound ``5 + ln(1 + 2 e^eta eta t)`` on ``w1(t) - w2(t)``.

    Requires zero biases, ``w1 in (0, 3)`` and ``w2 in (-2, 0)``.
    """
    if not eta > 0:
        raise NotApplicable(f"eta must be positive, got {eta}")
    if not _zero_bias(theta0):
        raise NotApplicable("biases must start at zero")
    if not (0 < theta0.w1 < 3 and -2 < theta0.w2 < 0):
        raise NotApplicable("needs w1 in (0, 3) and w2 in (-2, 0)")
    return 5.0 + math.log1p(2.0 * math.exp(eta) * eta * t)


def bias_gap_lower(theta0: Parameters, eta: float) -> tuple:
    """Start step ``t0`` and floor on ``b2 - b1`` for all ``t >= t0``.

    Requires ``w2 < 0 < w1``, ``w1 + w2 > 1``, zero biases and
    ``eta <= 0.3``.

    Returns
    -------
    (t0, bound) : (int, float)
        ``t0 = floor((w1 + w2) / (2 eta exp((w2 - w1) / 2)))`` and
        ``bound = (w1 + w2) / 11 - 1 / 10``.
    """
    w1, w2 = theta0.w1, theta0.w2
    if not 0 < eta <= 0.3:
        raise NotApplicable(f"needs eta in (0, 0.3], got {eta}")
    if not (w2 < 0 < w1 and w1 + w2 > 1 and _zero_bias(theta0)):
        raise NotApplicable("needs w2 < 0 < w1, w1 + w2 > 1 and zero biases")
    s = w1 + w2
    t0 = math.floor(s / (2 * eta * math.exp((-w1 + w2) / 2)))
    return int(t0), s / 11 - 1 / 10


def margin_bound_start(eta: float) -> int:
    """First step ``ceil(7 / eta)`` of the non-asymptotic margin bound."""
    # the guard keeps 7/0.05 from rounding up past 140
    return math.ceil(7.0 / eta - 1e-9)


def nonasymptotic_margin_bound(eta: float, t: int) -> float:
    """Floor ``1 / (25 + 5 ln(1 + 4 eta t))`` on the boundary point ``x*(t)``.

    Valid for ``eta in (0, 0.3]`` and ``t >= ceil(7 / eta)`` from starts
    with ``w1 in (2.7, 3)``, ``w2 in (-0.5, 0)`` and zero biases.
    """
    if not 0 < eta <= 0.3:
        raise NotApplicable(f"needs eta in (0, 0.3], got {eta}")
    if t < margin_bound_start(eta):
        raise NotApplicable(f"needs t >= {margin_bound_start(eta)}, got {t}")
    return 1.0 / (25.0 + 5.0 * math.log1p(4.0 * eta * t))


def margin_box_start(theta0: Parameters) -> bool:
    return 2.7 < theta0.w1 < 3 and -0.5 < theta0.w2 < 0 and _zero_bias(theta0)


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit ``x*(t) ~ c / ln t`` plus end-of-window checks."""

    c_hat: float
    relative_residual: float
    numerator_end: float
    product_end: float
    target: float
    n_points: int


def rate_fit(log: TrajectoryLog, window: tuple) -> RateFit:
    """Fit ``x*(t) = c / ln t`` over recorded steps with ``t_lo <= t <= t_hi``.

    Also reports ``(b2 - b1)`` and ``x* (w1 - w2)`` at the last step of
    the window, both of which approach :func:`equilibrium_target`.
    """
    t_lo, t_hi = window
    sel = np.nonzero((log.t >= t_lo) & (log.t <= t_hi))[0]
    if sel.size == 0 or t_lo <= 1:
        raise DomainError(f"window {window} selects no usable steps")
    overlap = np.nonzero(log.code == ActivationPattern.OVERLAP.code)[0]
    if overlap.size == 0 or log.t[overlap[0]] > t_lo:
        raise DomainError("trajectory is not in the overlap regime by the window start")
    x = log.x_star[sel]
    if np.isnan(x).any():
        raise DomainError("boundary point undefined inside the window")
    basis = 1.0 / np.log(log.t[sel].astype(float))
    c_hat = float(basis @ x / (basis @ basis))
    scale = float(np.linalg.norm(x))
    resid = float(np.linalg.norm(x - c_hat * basis))
    rel = resid / scale if scale > 0 else 0.0
    end = sel[-1]
    w1, b1, w2, b2 = log.theta[end]
    theta0 = Parameters(*log.theta[0])
    return RateFit(
        c_hat=c_hat,
        relative_residual=rel,
        numerator_end=float(b2 - b1),
        product_end=float(log.x_star[end] * (w1 - w2)),
        target=equilibrium_target(theta0),
        n_points=int(sel.size),
    )


# trajectory audit


@dataclass
class BoundEntry:
    """Verdict of one bound over a trajectory.

    ``worst_slack`` is the signed minimum of ``observed - bound`` (lower
    bounds) or ``bound - observed`` (upper bounds); negative means the
    bound failed somewhere.
    """

    bound_id: str
    description: str
    applicable: bool = False
    reason: str = ""
    n_checked: int = 0
    n_passed: int = 0
    first_violation: Optional[int] = None
    worst_slack: float = math.inf

    def check(self, t: int, slack: float, tol: float = 0.0, strict: bool = False):
        """Record one comparison; ``strict`` demands a positive slack."""
        slack = float(slack)
        if math.isnan(slack):
            slack = -math.inf
        bad = slack <= 0 if strict else slack < -tol
        self.n_checked += 1
        self.worst_slack = min(self.worst_slack, slack)
        if bad:
            if self.first_violation is None:
                self.first_violation = int(t)
        else:
            self.n_passed += 1

    @property
    def n_violations(self) -> int:
        return self.n_checked - self.n_passed

    def to_dict(self) -> dict:
        return {
            "bound_id": self.bound_id,
            "description": self.description,
            "applicable": self.applicable,
            "reason": self.reason,
            "n_checked": self.n_checked,
            "n_passed": self.n_passed,
            "first_violation": self.first_violation,
            "worst_slack": None if math.isinf(self.worst_slack) else self.worst_slack,
        }


@dataclass
class BoundReport:
    eta: float
    theta0: Parameters
    entries: list = field(default_factory=list)
    anchor_t: Optional[int] = None

    def __getitem__(self, bound_id: str) -> BoundEntry:
        for e in self.entries:
            if e.bound_id == bound_id:
                return e
        raise KeyError(bound_id)

    @property
    def n_violations(self) -> int:
        return sum(e.n_violations for e in self.entries if e.applicable)

    @property
    def ok(self) -> bool:
        return self.n_violations == 0

    def to_document(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "eta": self.eta,
            "theta0": list(self.theta0.astuple()),
            "anchor_t": self.anchor_t,
            "n_violations": self.n_violations,
            "entries": [e.to_dict() for e in self.entries],
        }

    def to_json_text(self) -> str:
        return json.dumps(self.to_document(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        head = f"{'bound':<22} {'applies':<8} {'checked':>8} {'passed':>8} {'first_bad':>10} {'worst_slack':>13}  note"
        lines = [head, "-" * len(head)]
        for e in self.entries:
            bad = "-" if e.first_violation is None else str(e.first_violation)
            slack = "-" if math.isinf(e.worst_slack) else f"{e.worst_slack:.6g}"
            lines.append(
                f"{e.bound_id:<22} {'yes' if e.applicable else 'no':<8} {e.n_checked:>8} "
                f"{e.n_passed:>8} {bad:>10} {slack:>13}  {e.reason}"
            )
        lines.append(f"violations: {self.n_violations}")
        return "\n".join(lines) + "\n"


_DESCRIPTIONS = {
    "w1_sandwich": "logarithmic growth sandwich on w1",
    "w2_sandwich": "logarithmic growth sandwich on w2",
    "v1_conserved": "w1 - b1 constant while specialized",
    "u2_conserved": "w2 + b2 constant while specialized",
    "equilibrium_sum": "w1 - b1 + w2 + b2 constant while specialized",
    "monotone_params": "w1, b1, b2 strictly rise and w2 strictly falls",
    "breakpoints_inside": "beta1 falls and beta2 rises, both staying in [-1, 1]",
    "boundary_identity": "x* (w1 - w2) equals b2 - b1",
    "weight_gap": "w1 - w2 <= 5 + ln(1 + 2 e^eta eta t)",
    "bias_gap": "b2 - b1 >= (w1 + w2) / 11 - 1/10 for t >= t0",
    "monotone_equilibrium": "|w1 + w2 - S*| non-increasing",
    "margin_floor": "x*(t) >= 1 / (25 + 5 ln(1 + 4 eta t))",
    "loss_decrease": "loss strictly decreasing once below 0.5",
    "loss_exclusion": "excluded sign configurations have loss >= 0.5",
    "phase_graph": "pattern changes follow the allowed transition graph",
}

# float allowances for checks that hold exactly in real arithmetic
SANDWICH_RTOL = 1e-12
CONSERVED_RTOL = 1e-12
SUM_ATOL = 1e-9
IDENTITY_RTOL = 1e-12


def audit_trajectory(log: TrajectoryLog, theta0: Parameters, eta: float) -> BoundReport:
    """Check every applicable bound at every recorded step of ``log``.

    Specialized-regime bounds treat the first recorded step that satisfies
    a specialized assumption as their time origin.  Bounds stated for
    zero-bias starts (weight gap, bias gap, margin floor) use ``theta0``
    at ``t = 0`` and apply only when the log starts there.
    """
    entries = {k: BoundEntry(k, d) for k, d in _DESCRIPTIONS.items()}
    report = BoundReport(eta=float(eta), theta0=theta0, entries=list(entries.values()))
    n = len(log)
    if n == 0:
        for e in entries.values():
            e.reason = "empty log"
        return report
    t = log.t
    th = log.theta
    w1, b1, w2, b2 = th[:, 0], th[:, 1], th[:, 2], th[:, 3]
    starts_at_theta0 = int(t[0]) == 0 and tuple(th[0]) == theta0.astuple()

    # time origin for the specialized-regime bounds
    anchor = None
    for i in range(n):
        if specialized_assumption(Parameters(*th[i])) is not None:
            anchor = i
            break
    spec_ids = (
        "w1_sandwich", "w2_sandwich", "v1_conserved", "u2_conserved",
        "equilibrium_sum", "monotone_params", "breakpoints_inside",
    )
    if anchor is None or not eta > 0:
        for k in spec_ids:
            entries[k].reason = "never in a specialized configuration"
    else:
        report.anchor_t = int(t[anchor])
        origin = Parameters(*th[anchor])
        note = f"origin t={int(t[anchor])}"
        for k in spec_ids:
            entries[k].applicable = True
            entries[k].reason = note
        v1_0 = origin.w1 - origin.b1
        u2_0 = origin.w2 + origin.b2
        for i in range(anchor, n):
            tau = int(t[i] - t[anchor])
            lo, hi = w1_bounds(origin, eta, tau)
            tol = SANDWICH_RTOL * max(1.0, abs(w1[i]))
            entries["w1_sandwich"].check(t[i], min(w1[i] - lo, hi - w1[i]), tol)
            lo, hi = w2_bounds(origin, eta, tau)
            tol = SANDWICH_RTOL * max(1.0, abs(w2[i]))
            entries["w2_sandwich"].check(t[i], min(w2[i] - lo, hi - w2[i]), tol)
            scale = max(1.0, abs(w1[i]) + abs(b1[i]))
            entries["v1_conserved"].check(
                t[i], CONSERVED_RTOL * scale - abs(w1[i] - b1[i] - v1_0)
            )
            scale = max(1.0, abs(w2[i]) + abs(b2[i]))
            entries["u2_conserved"].check(
                t[i], CONSERVED_RTOL * scale - abs(w2[i] + b2[i] - u2_0)
            )
            drift = (w1[i] - b1[i] + w2[i] + b2[i]) - (v1_0 + u2_0)
            entries["equilibrium_sum"].check(t[i], SUM_ATOL - abs(drift))
            if i > anchor:
                j = i - 1
                slack = min(w1[i] - w1[j], b1[i] - b1[j], b2[i] - b2[j], w2[j] - w2[i])
                entries["monotone_params"].check(t[i], slack, strict=True)
                beta1_old, beta1 = -b1[j] / w1[j], -b1[i] / w1[i]
                beta2_old, beta2 = -b2[j] / w2[j], -b2[i] / w2[i]
                slack = min(beta1_old - beta1, beta2 - beta2_old, beta1 + 1, 1 - beta2)
                entries["breakpoints_inside"].check(t[i], slack, 1e-12)

    _audit_identity(log, entries["boundary_identity"])
    _audit_zero_bias_bounds(log, theta0, eta, starts_at_theta0, entries)
    _audit_loss(log, eta, entries)
    return report


def _audit_identity(log, entry):
    rows = np.nonzero((log.code == ActivationPattern.OVERLAP.code) & ~np.isnan(log.x_star))[0]
    if rows.size == 0:
        entry.reason = "no overlap-regime steps"
        return
    entry.applicable = True
    entry.reason = "overlap-regime steps"
    for i in rows:
        w1, b1, w2, b2 = log.theta[i]
        num = b2 - b1
        prod = log.x_star[i] * (w1 - w2)
        scale = max(abs(num), abs(prod))
        entry.check(log.t[i], IDENTITY_RTOL * scale - abs(prod - num))


def _audit_zero_bias_bounds(log, theta0, eta, starts_at_theta0, entries):
    t = log.t
    th = log.theta
    if not starts_at_theta0:
        for k in ("weight_gap", "bias_gap", "monotone_equilibrium", "margin_floor"):
            entries[k].reason = "log does not start at theta0"
        return

    e = entries["weight_gap"]
    try:
        weight_gap_upper(theta0, eta, 0)
        e.applicable, e.reason = True, "zero-bias start"
        for i in range(len(log)):
            gap = th[i, 0] - th[i, 2]
            bound = weight_gap_upper(theta0, eta, int(t[i]))
            e.check(t[i], bound - gap, SANDWICH_RTOL * bound)
    except NotApplicable as exc:
        e.reason = exc.reason

    e = entries["bias_gap"]
    try:
        t0, bound = bias_gap_lower(theta0, eta)
        e.applicable, e.reason = True, f"t0={t0}"
        for i in np.nonzero(t >= t0)[0]:
            e.check(t[i], (th[i, 3] - th[i, 1]) - bound)
    except NotApplicable as exc:
        e.reason = exc.reason

    e = entries["monotone_equilibrium"]
    if theta0.b1 == theta0.b2 and 0 < eta <= 0.5 and specialized_assumption(theta0):
        e.applicable, e.reason = True, "equal starting biases"
        target = equilibrium_target(theta0)
        dist = np.abs(th[:, 0] + th[:, 2] - target)
        for i in range(1, len(log)):
            e.check(t[i], dist[i - 1] - dist[i], 1e-12 * max(1.0, abs(target)))
    else:
        e.reason = "needs equal starting biases, eta <= 0.5 and a specialized start"

    e = entries["margin_floor"]
    if margin_box_start(theta0) and 0 < eta <= 0.3:
        t_start = margin_bound_start(eta)
        e.applicable, e.reason = True, f"t >= {t_start}"
        for i in np.nonzero(t >= t_start)[0]:
            bound = nonasymptotic_margin_bound(eta, int(t[i]))
            e.check(t[i], log.x_star[i] - bound)
    else:
        e.reason = "needs w1 in (2.7, 3), w2 in (-0.5, 0), zero biases, eta <= 0.3"


def _audit_loss(log, eta, entries):
    below = np.nonzero(log.loss < 0.5)[0]

    e = entries["loss_decrease"]
    if below.size and 0 < eta <= 0.5:
        e.applicable, e.reason = True, f"loss < 0.5 from t={int(log.t[below[0]])}"
        for i in range(below[0] + 1, len(log)):
            e.check(log.t[i], log.loss[i - 1] - log.loss[i], strict=True)
    else:
        e.reason = "loss never below 0.5 or eta > 0.5"

    e = entries["loss_exclusion"]
    e.applicable, e.reason = True, "all steps"
    for i in range(len(log)):
        if excluded_by_loss_bound(Parameters(*log.theta[i])):
            e.check(log.t[i], log.loss[i] - 0.5)

    e = entries["phase_graph"]
    if below.size:
        e.applicable, e.reason = True, "changes after loss < 0.5"
        t_cls = log.t[below[0]]
        codes = log.code
        for i in range(1, len(log)):
            if codes[i] == codes[i - 1] or log.t[i] <= t_cls:
                continue
            edge = (ActivationPattern.from_code(codes[i - 1]), ActivationPattern.from_code(codes[i]))
            e.check(log.t[i], 1.0 if edge in ALLOWED_EDGES else -1.0)
    else:
        e.reason = "loss never below 0.5"
