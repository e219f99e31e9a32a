"""Columnar trajectory logs and their CSV/JSON serialization."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .model import Parameters
from .patterns import ActivationPattern

SCHEMA_VERSION = "1"
CSV_HEADER = ("t", "w1", "b1", "w2", "b2", "loss", "x_star", "margin", "pattern")


class TerminalStatus(enum.Enum):
    ITERATION_CAP = "ReachedIterationCap"
    EQUILIBRIUM = "ReachedEquilibriumTol"
    DIVERGED = "Diverged"
    NEVER_CLASSIFIED = "NeverClassified"
    # flow runs stopped on a loss target
    LOSS_TOL = "ReachedLossTol"


class Step(NamedTuple):
    t: float
    theta: Parameters
    loss: float
    pattern: ActivationPattern
    boundary: Optional[float]
    margin: float


def _fmt(x: float) -> str:
    # repr is the shortest round-trip form, so reruns are byte-identical
    return repr(float(x))


@dataclass
class TrajectoryLog:
    """Recorded states of a gradient-descent or gradient-flow run.

    Columns are numpy arrays of equal length.  ``t`` is the iteration
    index; for flow runs ``dt`` is set and ``times`` gives virtual time.
    ``x_star`` is the unique decision boundary point (NaN when there is
    none or more than one).
    """

    t: np.ndarray
    theta: np.ndarray
    loss: np.ndarray
    code: np.ndarray
    x_star: np.ndarray
    margin: np.ndarray
    eta: float
    terminal_status: TerminalStatus
    config: dict = field(default_factory=dict)
    dt: Optional[float] = None
    steps_taken: int = 0
    final: Optional[Parameters] = None
    divergence_exponent: Optional[float] = None

    @classmethod
    def from_columns(cls, out: dict, eta: float, config: dict, dt=None) -> "TrajectoryLog":
        status = out["status"]
        return cls(
            t=out["t"],
            theta=out["theta"],
            loss=out["loss"],
            code=out["code"],
            x_star=out["x_star"],
            margin=out["margin"],
            eta=eta,
            terminal_status=status,
            config=config,
            dt=dt,
            steps_taken=out["steps"],
            final=out["final"],
            divergence_exponent=out["exponent"] if status is TerminalStatus.DIVERGED else None,
        )

    def __len__(self) -> int:
        return len(self.t)

    @property
    def times(self) -> np.ndarray:
        return self.t * self.dt if self.dt is not None else self.t.astype(float)

    @property
    def w1(self):
        return self.theta[:, 0]

    @property
    def b1(self):
        return self.theta[:, 1]

    @property
    def w2(self):
        return self.theta[:, 2]

    @property
    def b2(self):
        return self.theta[:, 3]

    @property
    def patterns(self) -> list:
        return [ActivationPattern.from_code(c) for c in self.code]

    @property
    def transitions(self) -> list:
        from .dynamics import detect_phase_transitions

        return detect_phase_transitions(self)

    def step(self, i: int) -> Step:
        x = float(self.x_star[i])
        return Step(
            t=float(self.times[i]) if self.dt is not None else int(self.t[i]),
            theta=Parameters(*self.theta[i]),
            loss=float(self.loss[i]),
            pattern=ActivationPattern.from_code(self.code[i]),
            boundary=None if math.isnan(x) else x,
            margin=float(self.margin[i]),
        )

    @property
    def steps(self) -> list:
        return [self.step(i) for i in range(len(self))]

    @property
    def last(self) -> Parameters:
        return Parameters(*self.theta[-1])

    # serialization

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        times = self.times
        for i in range(len(self)):
            t = _fmt(times[i]) if self.dt is not None else str(int(self.t[i]))
            x = self.x_star[i]
            writer.writerow(
                [t, *(_fmt(v) for v in self.theta[i]), _fmt(self.loss[i]),
                 "" if math.isnan(x) else _fmt(x), _fmt(self.margin[i]),
                 ActivationPattern.from_code(self.code[i]).value]
            )
        return buf.getvalue()

    def to_document(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "eta": self.eta,
            "dt": self.dt,
            "terminal_status": self.terminal_status.value,
            "steps_taken": self.steps_taken,
            "n_records": len(self),
            "final": None if self.final is None else list(self.final.astuple()),
            "divergence": None
            if self.divergence_exponent is None
            else {"step": self.steps_taken, "exponent": self.divergence_exponent},
            "transitions": [
                {"t": int(t), "from": a.value, "to": b.value} for t, a, b in self.transitions
            ],
        }

    def to_json_text(self) -> str:
        return json.dumps(self.to_document(), indent=2, sort_keys=True) + "\n"

    def write(self, stem) -> tuple:
        """Write ``<stem>.csv`` and ``<stem>.json``; return both paths."""
        stem = str(stem)
        paths = (stem + ".csv", stem + ".json")
        with open(paths[0], "w", newline="") as fh:
            fh.write(self.to_csv_text())
        with open(paths[1], "w") as fh:
            fh.write(self.to_json_text())
        return paths

    @classmethod
    def read_csv(cls, path, eta: float, status: TerminalStatus = TerminalStatus.ITERATION_CAP):
        """Load a gradient-descent log written by :meth:`to_csv_text`."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != CSV_HEADER:
                raise ValueError(f"unexpected header {header}")
            rows = list(reader)
        by_name = {p.value: p for p in ActivationPattern}
        n = len(rows)
        t = np.empty(n, dtype=np.int64)
        theta = np.empty((n, 4))
        loss = np.empty(n)
        code = np.empty(n, dtype=np.int8)
        x_star = np.empty(n)
        margin = np.empty(n)
        for i, r in enumerate(rows):
            if len(r) != len(CSV_HEADER):
                raise ValueError(f"row {i + 1} has {len(r)} fields")
            t[i] = int(r[0])
            theta[i] = [float(v) for v in r[1:5]]
            loss[i] = float(r[5])
            x_star[i] = float(r[6]) if r[6] else math.nan
            margin[i] = float(r[7])
            code[i] = by_name[r[8]].code
        return cls(
            t=t, theta=theta, loss=loss, code=code, x_star=x_star, margin=margin,
            eta=float(eta), terminal_status=status,
            steps_taken=int(t[-1]) if n else 0,
            final=Parameters(*theta[-1]) if n else None,
        )
