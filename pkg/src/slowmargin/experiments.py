"""Monte-Carlo study of He-initialized gradient descent.

Each trial draws ``w1, w2 ~ N(0, 2)`` with zero biases, runs gradient
descent until the equilibrium test passes (or gives up), and records
``min(|b2 - b1|, |w1(0) + w2(0)| / 2)``.  For converged trials that value
follows the law of half the absolute gap between two half-normal
weights, with CDF ``F_B(x) = 1 - erfc(x / sqrt 2)^2``.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .dynamics import simulate
from .errors import DomainError
from .model import Parameters
from .trajectory import SCHEMA_VERSION, TerminalStatus

BIN_WIDTH = 0.1
HIST_MAX = 3.0
N_BINS = int(round(HIST_MAX / BIN_WIDTH))
BINS_PER_UNIT = int(round(1 / BIN_WIDTH))
TRUNCATION_SLACK = 0.02


@dataclass(frozen=True)
class TrialConfig:
    eta: float = 0.05
    classify_cap: int = 10_000
    equilibrium_tol: float = 1e-3
    max_steps: int = 5_000_000
    seed: int = 0

    def __post_init__(self):
        if not (self.eta > 0 and self.classify_cap > 0 and self.equilibrium_tol > 0 and self.max_steps > 0):
            raise DomainError("trial settings must be positive")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must fit in 64 unsigned bits")


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent counter-based stream for one trial."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(trial,))))


def he_init(rng: np.random.Generator) -> Parameters:
    """Slopes from N(0, 2) by Box-Muller, biases exactly zero."""
    u1, u2 = rng.random(2)
    r = math.sqrt(-2.0 * math.log1p(-u1))
    scale = math.sqrt(2.0)
    return Parameters(scale * r * math.cos(2 * math.pi * u2), 0.0, scale * r * math.sin(2 * math.pi * u2), 0.0)


@dataclass(frozen=True)
class TrialOutcome:
    trial: int
    theta0: Parameters
    status: TerminalStatus
    converged: bool
    iterations_used: int
    theta_final: Parameters
    numerator_final: float  # b2 - b1
    predicted_limit: float  # (w1(0) + w2(0)) / 2
    lower_bound_stat: float

    @property
    def truncation_binds(self) -> bool:
        """True when ``|b2 - b1|`` is still short of the limit by over 2%."""
        return abs(self.numerator_final) < abs(self.predicted_limit) * (1 - TRUNCATION_SLACK)


def run_trial(cfg: TrialConfig, rng: np.random.Generator, trial: int = 0) -> TrialOutcome:
    """One He-initialized run with the classification cap and equilibrium stop."""
    theta0 = he_init(rng)
    out = simulate(
        theta0,
        cfg.eta,
        cfg.max_steps,
        record="endpoints",
        classify_cap=cfg.classify_cap,
        equilibrium_tol=cfg.equilibrium_tol,
    )
    final = out["final"]
    numerator = final.b2 - final.b1
    predicted = 0.5 * (theta0.w1 + theta0.w2)
    return TrialOutcome(
        trial=trial,
        theta0=theta0,
        status=out["status"],
        converged=out["status"] is TerminalStatus.EQUILIBRIUM,
        iterations_used=out["steps"],
        theta_final=final,
        numerator_final=numerator,
        predicted_limit=predicted,
        lower_bound_stat=min(abs(numerator), abs(predicted)),
    )


def _run_range(args) -> list:
    cfg, start, stop = args
    return [run_trial(cfg, trial_rng(cfg.seed, k), k) for k in range(start, stop)]


# erfc and the gap law


def erfc(x: float) -> float:
    """Complementary error function (the C library rational approximation)."""
    return math.erfc(x)


def gap_pdf(x: float) -> float:
    """Density ``2 sqrt(2/pi) exp(-x^2/2) erfc(x/sqrt 2)`` for ``x >= 0``."""
    if not x >= 0:
        raise DomainError(f"gap density needs x >= 0, got {x}")
    return 2.0 * math.sqrt(2.0 / math.pi) * math.exp(-0.5 * x * x) * erfc(x / math.sqrt(2.0))


def gap_cdf(x: float) -> float:
    """``F_B(x) = 1 - erfc(x / sqrt 2)^2`` for ``x >= 0``."""
    if not x >= 0:
        raise DomainError(f"gap CDF needs x >= 0, got {x}")
    return 1.0 - erfc(x / math.sqrt(2.0)) ** 2


def gap_tail(x: float) -> float:
    """``1 - F_B(x)`` computed without cancellation."""
    if not x >= 0:
        raise DomainError(f"gap tail needs x >= 0, got {x}")
    return erfc(x / math.sqrt(2.0)) ** 2


@dataclass
class AggregateStats:
    """Ensemble summary.

    ``histogram`` counts ``lower_bound_stat`` of converged trials in bins
    of width 0.1 over [0, 3]; ``overflow`` counts values above 3.
    ``samples`` and ``truncated`` hold the converged trials' statistic and
    whether truncation still binds, in trial order.
    """

    n_trials: int
    n_converged: int
    histogram: list
    overflow: int
    empirical_tail_gt_1: float
    ks_statistic: float
    config: dict
    status_counts: dict
    samples: list = field(repr=False)
    truncated: list = field(repr=False)
    max_iterations: int = 0
    quadrant_law_holds: bool = True

    @property
    def converged_fraction(self) -> float:
        return self.n_converged / self.n_trials

    def bin_edges(self) -> list:
        return [(round(k * BIN_WIDTH, 10), round((k + 1) * BIN_WIDTH, 10)) for k in range(N_BINS)]

    def to_document(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "n_trials": self.n_trials,
            "n_converged": self.n_converged,
            "converged_fraction": self.converged_fraction,
            "empirical_tail_gt_1": self.empirical_tail_gt_1,
            "theoretical_tail_gt_1": gap_tail(1.0),
            "ks_statistic": self.ks_statistic,
            "status_counts": self.status_counts,
            "max_iterations": self.max_iterations,
            "quadrant_law_holds": self.quadrant_law_holds,
            "histogram": {"bin_width": BIN_WIDTH, "counts": self.histogram, "overflow": self.overflow},
        }

    def to_json_text(self) -> str:
        return json.dumps(self.to_document(), indent=2, sort_keys=True) + "\n"

    def histogram_csv_text(self) -> str:
        rows = ["bin_lo,bin_hi,count"]
        for (lo, hi), c in zip(self.bin_edges(), self.histogram):
            rows.append(f"{lo!r},{hi!r},{c}")
        rows.append(f"{HIST_MAX!r},inf,{self.overflow}")
        return "\n".join(rows) + "\n"


def aggregate(outcomes: list, cfg: TrialConfig) -> AggregateStats:
    """Order-independent reduction of trial outcomes (sorted by trial index)."""
    outcomes = sorted(outcomes, key=lambda o: o.trial)
    conv = [o for o in outcomes if o.converged]
    samples = [o.lower_bound_stat for o in conv]
    counts = [0] * N_BINS
    overflow = 0
    for s in samples:
        # multiply, not divide: 0.3 / 0.1 rounds below 3
        k = int(s * BINS_PER_UNIT)
        if k >= N_BINS:
            overflow += 1
        else:
            counts[k] += 1
    status_counts = {}
    for o in outcomes:
        status_counts[o.status.value] = status_counts.get(o.status.value, 0) + 1
    stats_ = AggregateStats(
        n_trials=len(outcomes),
        n_converged=len(conv),
        histogram=counts,
        overflow=overflow,
        empirical_tail_gt_1=(sum(s > 1 for s in samples) / len(samples)) if samples else math.nan,
        ks_statistic=math.nan,
        config=asdict(cfg),
        status_counts=dict(sorted(status_counts.items())),
        samples=samples,
        truncated=[o.truncation_binds for o in conv],
        max_iterations=max((o.iterations_used for o in outcomes), default=0),
        quadrant_law_holds=all(o.theta0.w2 < 0 < o.theta0.w1 for o in conv),
    )
    if sum(not t for t in stats_.truncated) >= 100:
        stats_.ks_statistic = compare_to_theory(stats_)[0]
    return stats_


def run_montecarlo(n: int, cfg: TrialConfig, parallelism: int = 1) -> AggregateStats:
    """Run ``n`` independent trials; results do not depend on ``parallelism``."""
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    if parallelism <= 1:
        outcomes = _run_range((cfg, 0, n))
    else:
        chunk = max(1, math.ceil(n / (4 * parallelism)))
        jobs = [(cfg, s, min(n, s + chunk)) for s in range(0, n, chunk)]
        outcomes = []
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            for part in pool.map(_run_range, jobs):
                outcomes.extend(part)
    return aggregate(outcomes, cfg)


def ks_critical_value(n: int, alpha: float = 0.01) -> float:
    """Two-sided one-sample KS critical value from the exact distribution."""
    return float(stats.kstwo.ppf(1 - alpha, n))


def ks_against_gap_law(samples, alpha: float = 0.01) -> tuple:
    """KS statistic of ``samples`` against ``F_B`` and whether it passes."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 100:
        raise DomainError(f"need at least 100 samples, got {samples.size}")
    d = float(stats.kstest(samples, np.vectorize(gap_cdf)).statistic)
    return d, d < ks_critical_value(samples.size, alpha)


def compare_to_theory(agg: AggregateStats, alpha: float = 0.01) -> tuple:
    """KS test of converged trials whose truncation no longer binds."""
    kept = [s for s, cut in zip(agg.samples, agg.truncated) if not cut]
    return ks_against_gap_law(kept, alpha)
