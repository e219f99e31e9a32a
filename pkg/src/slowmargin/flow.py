"""Fixed-step integration of the gradient flow ``d theta / d tau = -grad L``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from . import _kernels
from .dynamics import simulate
from .errors import DomainError
from .model import Parameters
from .trajectory import TrajectoryLog

_METHODS = {"euler": _kernels.GD, "rk4": _kernels.RK4}


@dataclass(frozen=True)
class FlowConfig:
    """Integration settings.

    Attributes
    ----------
    dt : float
        Step in virtual time.
    duration : float
        Virtual time horizon; the run takes ``round(duration / dt)`` steps.
    method : {"rk4", "euler"}
        Scheme.  An Euler step is exactly a gradient-descent step with
        ``eta = dt``.
    stop_loss : float, optional
        Stop early once the loss is at or below this value.
    record : {"thinned", "all", "endpoints"}
        Recording policy, as for gradient descent.
    """

    dt: float = 1e-3
    duration: float = 1.0
    method: str = "rk4"
    stop_loss: Optional[float] = None
    record: str = "thinned"

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise DomainError(f"dt must be positive, got {self.dt}")
        if not (math.isfinite(self.duration) and self.duration >= self.dt):
            raise DomainError(f"duration must be at least dt, got {self.duration}")
        if self.method not in _METHODS:
            raise DomainError(f"method must be one of {sorted(_METHODS)}, got {self.method!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


def gf_integrate(theta0: Parameters, cfg: FlowConfig) -> TrajectoryLog:
    """Integrate the flow from ``theta0``; the log's ``times`` are virtual.

    Kinks use the same ReLU'(0) = 0 convention as gradient descent and
    get no special event handling.  Divergence ends the log with status
    ``Diverged``.
    """
    out = simulate(
        theta0,
        cfg.dt,
        cfg.n_steps,
        method=_METHODS[cfg.method],
        record=cfg.record,
        loss_stop=cfg.stop_loss,
    )
    config = {
        "kind": "gf",
        "theta0": list(theta0.astuple()),
        "dt": cfg.dt,
        "duration": cfg.duration,
        "method": cfg.method,
        "stop_loss": cfg.stop_loss,
        "record": cfg.record,
    }
    return TrajectoryLog.from_columns(out, eta=cfg.dt, config=config, dt=cfg.dt)


def directional_distance(theta: Parameters, target: Parameters) -> float:
    """Euclidean distance between the unit vectors along two parameter vectors."""
    na = theta.norm()
    nb = target.norm()
    if na == 0.0 or nb == 0.0:
        raise DomainError("directional distance needs nonzero vectors")
    return math.sqrt(sum((a / na - b / nb) ** 2 for a, b in zip(theta, target)))
