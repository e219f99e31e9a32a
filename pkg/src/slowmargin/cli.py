"""Command-line front end.

Subcommands write their artifacts (CSV, JSON, SVG) into ``--out`` and print
a short ``key: value`` summary.  Exit codes: 0 success, 1 bad arguments,
2 numerical divergence, 3 bound violation.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass

from .bounds import audit_trajectory
from .dynamics import StopCriteria, run_trajectory
from .errors import DomainError
from .model import THETA_STAR, Parameters, margin_gap, robustness_margin
from .trajectory import TerminalStatus, TrajectoryLog

EXIT_OK = 0
EXIT_ARGS = 1
EXIT_DIVERGED = 2
EXIT_VIOLATION = 3


class UsageError(Exception):
    """Invalid flags or config values; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ARGS, f"{self.prog}: error: {message}\n")


# value parsing; every failure names the flag


def _theta(flag, value) -> Parameters:
    if isinstance(value, str):
        parts = value.split(",")
    elif isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        raise UsageError(f"{flag}: expected w1,b1,w2,b2")
    try:
        nums = [float(p) for p in parts]
    except (TypeError, ValueError):
        raise UsageError(f"{flag}: expected four comma-separated reals, got {value!r}") from None
    if len(nums) != 4:
        raise UsageError(f"{flag}: expected four comma-separated reals, got {len(nums)}")
    try:
        return Parameters(*nums)
    except (ValueError, DomainError) as exc:
        raise UsageError(f"{flag}: {exc}") from None


def _real(flag, value, lo=None, hi=None, lo_open=True) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise UsageError(f"{flag}: expected a real number, got {value!r}") from None
    if not math.isfinite(x):
        raise UsageError(f"{flag}: must be finite")
    if lo is not None and (x <= lo if lo_open else x < lo):
        raise UsageError(f"{flag}: must be {'>' if lo_open else '>='} {lo}, got {x}")
    if hi is not None and x > hi:
        raise UsageError(f"{flag}: must be <= {hi}, got {x}")
    return x


def _count(flag, value, lo=1) -> int:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise UsageError(f"{flag}: expected an integer, got {value!r}") from None
    if not (math.isfinite(x) and x == int(x)):
        raise UsageError(f"{flag}: expected an integer, got {value!r}")
    if int(x) < lo:
        raise UsageError(f"{flag}: must be at least {lo}, got {int(x)}")
    return int(x)


@dataclass
class RunConfig:
    """Merged settings for one command: defaults, then ``--config``, then flags."""

    command: str
    values: dict

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    def need(self, key):
        v = self.values.get(key)
        if v is None:
            raise UsageError(f"--{key.replace('_', '-')} is required")
        return v


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, ValueError) as exc:
        raise UsageError(f"--config: cannot read {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("--config: expected a JSON object")
    return doc


def _merge(args, parser_keys) -> RunConfig:
    values = {}
    if args.config is not None:
        doc = _load_config(args.config)
        unknown = sorted(set(k.replace("-", "_") for k in doc) - parser_keys)
        if unknown:
            raise UsageError(f"--config: unknown keys {unknown}")
        values.update({k.replace("-", "_"): v for k, v in doc.items()})
    for k in parser_keys:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    return RunConfig(args.command, values)


def _outdir(cfg: RunConfig) -> str:
    out = str(cfg.get("out", "."))
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"--out: cannot create {out}: {exc}") from None
    return out


def _emit(**pairs):
    for k, v in pairs.items():
        if isinstance(v, float):
            v = f"{v:.10g}"
        print(f"{k}: {v}")


def _final_summary(log: TrajectoryLog) -> dict:
    final = log.final
    gap = margin_gap(final) if final is not None else math.nan
    return {"terminal_status": log.terminal_status.value, "steps": log.steps_taken, "final_margin_gap": gap}


# commands


def cmd_trajectory(cfg: RunConfig) -> int:
    theta0 = _theta("--theta0", cfg.need("theta0"))
    eta = _real("--eta", cfg.need("eta"), lo=0.0)
    steps = _count("--steps", cfg.need("steps"))
    record = cfg.get("record", "thinned")
    if record not in ("thinned", "all", "endpoints"):
        raise UsageError(f"--record: unknown policy {record!r}")
    stop = StopCriteria() if cfg.get("stop_at_equilibrium", False) else None
    out = _outdir(cfg)

    from .plotting import trajectory_figure

    log = run_trajectory(theta0, eta, steps, stop=stop, record=record)
    stem = os.path.join(out, "trajectory")
    csv_path, json_path = log.write(stem)
    svg_path = trajectory_figure(log, stem + ".svg")
    _emit(**_final_summary(log), csv=csv_path, json=json_path, svg=svg_path)
    if log.terminal_status is TerminalStatus.DIVERGED:
        _emit(divergence_step=log.steps_taken, divergence_exponent=log.divergence_exponent)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_montecarlo(cfg: RunConfig) -> int:
    from .experiments import TrialConfig, compare_to_theory, gap_tail, run_montecarlo
    from .plotting import histogram_figure

    n = _count("--n", cfg.need("n"))
    defaults = TrialConfig()
    try:
        tc = TrialConfig(
            eta=_real("--eta", cfg.get("eta", defaults.eta), lo=0.0),
            classify_cap=_count("--classify-cap", cfg.get("classify_cap", defaults.classify_cap)),
            equilibrium_tol=_real("--equilibrium-tol", cfg.get("equilibrium_tol", defaults.equilibrium_tol), lo=0.0),
            max_steps=_count("--max-steps", cfg.get("max_steps", defaults.max_steps)),
            seed=_count("--seed", cfg.get("seed", defaults.seed), lo=0),
        )
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    parallel = _count("--parallel", cfg.get("parallel", 1))
    out = _outdir(cfg)

    agg = run_montecarlo(n, tc, parallelism=parallel)
    paths = {
        "json": os.path.join(out, "montecarlo.json"),
        "histogram_csv": os.path.join(out, "histogram.csv"),
        "svg": os.path.join(out, "histogram.svg"),
    }
    with open(paths["json"], "w") as fh:
        fh.write(agg.to_json_text())
    with open(paths["histogram_csv"], "w", newline="") as fh:
        fh.write(agg.histogram_csv_text())
    histogram_figure(agg, paths["svg"])
    summary = {
        "n_trials": agg.n_trials,
        "n_converged": agg.n_converged,
        "converged_fraction": agg.converged_fraction,
        "empirical_tail_gt_1": agg.empirical_tail_gt_1,
        "theoretical_tail_gt_1": gap_tail(1.0),
    }
    try:
        d, passed = compare_to_theory(agg)
        summary.update(ks_statistic=d, ks_pass=passed)
    except DomainError as exc:
        summary.update(ks_statistic="n/a", ks_note=str(exc))
    _emit(**summary, **paths)
    return EXIT_OK


def cmd_bounds(cfg: RunConfig) -> int:
    theta0 = _theta("--theta0", cfg.need("theta0"))
    eta = _real("--eta", cfg.need("eta"), lo=0.0)
    fresh = bool(cfg.get("fresh", False))
    path = cfg.get("log")
    if fresh == (path is not None):
        raise UsageError("give exactly one of --log or --fresh")
    if fresh:
        steps = _count("--steps", cfg.get("steps", 1_000_000))
        log = run_trajectory(theta0, eta, steps)
        if log.terminal_status is TerminalStatus.DIVERGED:
            _emit(terminal_status=log.terminal_status.value, divergence_step=log.steps_taken)
            return EXIT_DIVERGED
    else:
        log = _read_log(str(path), eta)
    out = _outdir(cfg)

    report = audit_trajectory(log, theta0, eta)
    text = report.to_text()
    paths = {"json": os.path.join(out, "bounds.json"), "table": os.path.join(out, "bounds.txt")}
    with open(paths["json"], "w") as fh:
        fh.write(report.to_json_text())
    with open(paths["table"], "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    _emit(**paths)
    if not report.ok:
        bad = [e for e in report.entries if e.applicable and e.n_violations]
        first = min(bad, key=lambda e: e.first_violation)
        _emit(first_violation_step=first.first_violation, first_violation_bound=first.bound_id)
        return EXIT_VIOLATION
    return EXIT_OK


def _read_log(path, eta) -> TrajectoryLog:
    status = TerminalStatus.ITERATION_CAP
    side = os.path.splitext(path)[0] + ".json"
    if os.path.exists(side):
        try:
            with open(side) as fh:
                status = TerminalStatus(json.load(fh)["terminal_status"])
        except (OSError, ValueError, KeyError, TypeError):
            pass
    try:
        log = TrajectoryLog.read_csv(path, eta, status)
    except (OSError, ValueError, KeyError, IndexError, StopIteration) as exc:
        raise UsageError(f"--log: cannot read {path}: {exc}") from None
    if len(log) == 0:
        raise UsageError(f"--log: {path} has no rows")
    return log


def cmd_kkt(cfg: RunConfig) -> int:
    from .kkt import find_certificate, kkt_residuals, scan_document, scan_kkt_directions

    tol = _real("--tol", cfg.get("tol", 1e-3), lo=0.0)
    scan = bool(cfg.get("scan", False))
    point = cfg.get("point")
    if scan == (point is not None):
        raise UsageError("give exactly one of --point or --scan")
    if point is not None:
        theta = _theta("--point", point)
        cert = find_certificate(theta, tol)
        if cert is None:
            _emit(verdict="not a KKT point")
            return EXIT_OK
        res = kkt_residuals(theta, cert)
        _emit(
            verdict="KKT point",
            certificate=f"lambda=({cert.lambda1:.6g},{cert.lambda2:.6g})",
            worst_residual=res.worst(),
        )
        return EXIT_OK
    resolution = _real("--resolution", cfg.get("resolution", 0.05), lo=0.0, hi=0.2)
    out = _outdir(cfg)
    hits = scan_kkt_directions(resolution, tol)
    path = os.path.join(out, "kkt_scan.json")
    with open(path, "w") as fh:
        fh.write(scan_document(hits, resolution, tol))
    star = THETA_STAR.asarray() / THETA_STAR.norm()
    dists = [float(((h.direction.asarray() - star) ** 2).sum() ** 0.5) for h in hits]
    _emit(
        n_accepted=len(hits),
        n_clusters=_n_clusters([h.direction.asarray() for h in hits], 2.5 * resolution),
        max_distance_to_theta_star=max(dists) if dists else "n/a",
        json=path,
    )
    return EXIT_OK


def _n_clusters(points, radius) -> int:
    """Single-linkage cluster count at the given linking radius."""
    parent = list(range(len(points)))

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(points)):
        for j in range(i):
            if ((points[i] - points[j]) ** 2).sum() <= radius * radius:
                parent[root(i)] = root(j)
    return len({root(i) for i in range(len(points))})


def cmd_gf(cfg: RunConfig) -> int:
    from .flow import FlowConfig, directional_distance, gf_integrate
    from .plotting import trajectory_figure

    theta0 = _theta("--theta0", cfg.need("theta0"))
    dt = _real("--dt", cfg.need("dt"), lo=0.0)
    duration = _real("--duration", cfg.need("duration"), lo=0.0)
    stop_loss = cfg.get("stop_loss")
    if stop_loss is not None:
        stop_loss = _real("--stop-loss", stop_loss, lo=0.0)
    try:
        fc = FlowConfig(
            dt=dt, duration=duration, method=cfg.get("method", "rk4"),
            stop_loss=stop_loss, record=cfg.get("record", "thinned"),
        )
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    out = _outdir(cfg)

    log = gf_integrate(theta0, fc)
    stem = os.path.join(out, "gf")
    csv_path, json_path = log.write(stem)
    svg_path = trajectory_figure(log, stem + ".svg")
    final = log.final
    _emit(
        terminal_status=log.terminal_status.value,
        virtual_time=log.steps_taken * fc.dt,
        final_loss=float(log.loss[-1]),
        margin=robustness_margin(final),
        directional_distance=directional_distance(final, THETA_STAR),
        csv=csv_path, json=json_path, svg=svg_path,
    )
    if log.terminal_status is TerminalStatus.DIVERGED:
        _emit(divergence_step=log.steps_taken)
        return EXIT_DIVERGED
    return EXIT_OK


_COMMANDS = {
    "trajectory": cmd_trajectory,
    "montecarlo": cmd_montecarlo,
    "bounds": cmd_bounds,
    "kkt": cmd_kkt,
    "gf": cmd_gf,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="slowmargin", description="Gradient-descent margin dynamics of a two-neuron ReLU network.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file of settings; flags override it")
        sp.add_argument("--out", help="output directory (default: current)")

    sp = sub.add_parser("trajectory", help="run gradient descent and log it")
    common(sp)
    sp.add_argument("--theta0", help="w1,b1,w2,b2")
    sp.add_argument("--eta", help="step size")
    sp.add_argument("--steps", help="number of steps")
    sp.add_argument("--record", choices=["thinned", "all", "endpoints"])
    sp.add_argument("--stop-at-equilibrium", action="store_true", default=None,
                    help="stop once |w1 + w2 - (b2 - b1)| <= 1e-3 in a classifying pattern")

    sp = sub.add_parser("montecarlo", help="He-initialized ensemble")
    common(sp)
    sp.add_argument("--n", help="number of trials")
    sp.add_argument("--eta")
    sp.add_argument("--seed")
    sp.add_argument("--parallel", help="worker processes (results do not depend on it)")
    sp.add_argument("--max-steps")
    sp.add_argument("--classify-cap")
    sp.add_argument("--equilibrium-tol")

    sp = sub.add_parser("bounds", help="audit a trajectory against the theoretical bounds")
    common(sp)
    sp.add_argument("--log", help="trajectory CSV to audit")
    sp.add_argument("--fresh", action="store_true", default=None, help="simulate from --theta0 first")
    sp.add_argument("--theta0")
    sp.add_argument("--eta")
    sp.add_argument("--steps", help="steps for --fresh (default 1000000)")

    sp = sub.add_parser("kkt", help="check KKT conditions of the max-margin problem")
    common(sp)
    sp.add_argument("--point", help="w1,b1,w2,b2")
    sp.add_argument("--scan", action="store_true", default=None, help="scan grid directions")
    sp.add_argument("--resolution", help="grid angle step in (0, 0.2]")
    sp.add_argument("--tol")

    sp = sub.add_parser("gf", help="integrate the gradient flow")
    common(sp)
    sp.add_argument("--theta0")
    sp.add_argument("--dt")
    sp.add_argument("--duration")
    sp.add_argument("--method", choices=["rk4", "euler"])
    sp.add_argument("--stop-loss", help="stop once the loss is at or below this")
    sp.add_argument("--record", choices=["thinned", "all", "endpoints"])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    keys = {k for k in vars(args) if k not in ("command", "config")}
    try:
        cfg = _merge(args, keys)
        return _COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"slowmargin {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
