"""The two-neuron ReLU network, its exponential loss and margin.

The network is ``Phi(x) = relu(w1 x + b1) - relu(w2 x + b2)`` trained on
the two labelled points ``(-1, -1)`` and ``(1, 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from . import _scalar
from .errors import DivergenceError, DomainError

# (instance, label) pairs; every formula in the package assumes exactly these.
TRAINING_SET = ((-1.0, -1.0), (1.0, 1.0))


@dataclass(frozen=True)
class Parameters:
    """Trainable weights and biases ``(w1, b1, w2, b2)``."""

    w1: float
    b1: float
    w2: float
    b2: float

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)

    def __iter__(self) -> Iterator[float]:
        return iter((self.w1, self.b1, self.w2, self.b2))

    def astuple(self) -> tuple:
        return (self.w1, self.b1, self.w2, self.b2)

    def asarray(self) -> np.ndarray:
        return np.array(self.astuple())

    @classmethod
    def from_seq(cls, values: Sequence[float]) -> "Parameters":
        values = list(values)
        if len(values) != 4:
            raise DomainError(f"expected 4 parameters, got {len(values)}")
        return cls(*values)

    def scaled(self, c: float) -> "Parameters":
        return Parameters(c * self.w1, c * self.b1, c * self.w2, c * self.b2)

    def norm(self) -> float:
        return math.sqrt(self.w1**2 + self.b1**2 + self.w2**2 + self.b2**2)

    def derived(self) -> "DerivedQuantities":
        return DerivedQuantities.of(self)


# The max-margin direction, normalised so the margin constraints are tight.
THETA_STAR = Parameters(0.5, 0.5, -0.5, 0.5)


@dataclass(frozen=True)
class DerivedQuantities:
    """Diagonal coordinates and breakpoints of a parameter vector.

    ``v = w - b`` and ``u = w + b`` are the preactivations at ``x = -1``
    (negated) and ``x = +1``; ``beta_j = -b_j / w_j`` is where neuron j
    switches, absent for a zero slope.
    """

    v1: float
    u1: float
    v2: float
    u2: float
    beta1: Optional[float]
    beta2: Optional[float]

    @classmethod
    def of(cls, theta: Parameters) -> "DerivedQuantities":
        w1, b1, w2, b2 = theta
        return cls(
            v1=w1 - b1,
            u1=w1 + b1,
            v2=w2 - b2,
            u2=w2 + b2,
            beta1=None if w1 == 0.0 else -b1 / w1,
            beta2=None if w2 == 0.0 else -b2 / w2,
        )


@dataclass(frozen=True)
class BoundarySet:
    """Points where the network output crosses or touches zero.

    Attributes
    ----------
    points : tuple of float
        Strictly increasing; empty when Phi never vanishes at an isolated
        point or interval end.
    signature : tuple of bool
        Whether each training instance is strictly correctly classified.
    degenerate : bool
        True when Phi is constant on the whole line.
    """

    points: tuple
    signature: tuple
    degenerate: bool = False


def _check_x(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"input must be finite, got {x!r}")
    return x


def eval_network(theta: Parameters, x: float) -> float:
    """Network output ``relu(w1 x + b1) - relu(w2 x + b2)``."""
    return _scalar.phi(*theta, _check_x(x))


def per_instance_margins(theta: Parameters) -> tuple:
    """``y_i * Phi(x_i)`` for both training points."""
    return tuple(y * _scalar.phi(*theta, x) for x, y in TRAINING_SET)


def loss(theta: Parameters) -> float:
    """Exponential loss ``0.5 exp(Phi(-1)) + 0.5 exp(-Phi(1))``.

    Raises
    ------
    DivergenceError
        When a per-instance exponent exceeds the guard of 700.
    """
    z1, z2 = _scalar.loss_exponents(*theta)
    worst = max(z1, z2)
    if worst > _scalar.EXP_GUARD:
        raise DivergenceError(worst)
    return 0.5 * math.exp(z1) + 0.5 * math.exp(z2)


def decision_boundary(theta: Parameters) -> BoundarySet:
    """Solve ``Phi = 0`` on each of the (at most three) linear pieces."""
    buf, n, constant = _scalar.boundary_points(*theta)
    signature = tuple(m > 0.0 for m in per_instance_margins(theta))
    return BoundarySet(tuple(float(p) for p in buf[:n]), signature, bool(constant))


def robustness_margin(theta: Parameters) -> float:
    """Smallest input perturbation that changes a training prediction.

    Zero when an instance is misclassified (a zero output counts as
    misclassified) and ``inf`` when both are correct and Phi never
    vanishes.
    """
    return float(_scalar.margin(*theta))


def margin_gap(theta: Parameters) -> float:
    """Shortfall ``1 - margin`` from the optimal margin, clamped at 0."""
    m = robustness_margin(theta)
    if math.isinf(m):
        return 0.0
    return max(0.0, 1.0 - m)


def equilibrium_residual(theta: Parameters) -> float:
    """``w1 + w2 + b1 - b2``; its size is the equilibrium stopping test."""
    return theta.w1 + theta.w2 + theta.b1 - theta.b2
