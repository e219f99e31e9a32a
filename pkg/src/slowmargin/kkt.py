"""KKT conditions of the max-margin problem and a direction scan.

The problem is ``min 0.5 ||theta||^2`` subject to ``y_i Phi(theta; x_i) >= 1``.
A certificate supplies dual weights ``lambda_i >= 0`` and a subgradient
selection ``g[i][j]`` in [0, 1] for neuron j on instance i; ``g`` is pinned
to 1 (0) where the preactivation is strictly positive (negative).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError
from .model import THETA_STAR, TRAINING_SET, Parameters, per_instance_margins
from .trajectory import SCHEMA_VERSION

# |preactivation| at or below this leaves the matching g entry free
ZERO_BAND = 1e-9
GRID_STEP = 0.05


@dataclass(frozen=True)
class KKTCertificate:
    lambda1: float
    lambda2: float
    g: tuple  # g[i][j]: instance i, neuron j

    def to_dict(self) -> dict:
        return {"lambda": [self.lambda1, self.lambda2], "g": [list(r) for r in self.g]}


@dataclass(frozen=True)
class KKTResiduals:
    stationarity: float
    feasibility: tuple  # y_i Phi(x_i) - 1
    dual_feasibility: float  # min lambda
    complementarity: float

    def worst(self) -> float:
        """Largest violation; a value at or below tol certifies a KKT point."""
        return max(
            self.stationarity,
            max(0.0, -min(self.feasibility)),
            max(0.0, -self.dual_feasibility),
            self.complementarity,
        )

    def to_dict(self) -> dict:
        return {
            "stationarity": self.stationarity,
            "feasibility": list(self.feasibility),
            "dual_feasibility": self.dual_feasibility,
            "complementarity": self.complementarity,
        }


def preactivations(theta: Parameters) -> np.ndarray:
    """``pre[i, j] = w_j x_i + b_j``."""
    w1, b1, w2, b2 = theta
    return np.array([[w1 * x + b1, w2 * x + b2] for x, _ in TRAINING_SET])


def free_entries(theta: Parameters) -> list:
    pre = preactivations(theta)
    return [(i, j) for i in range(2) for j in range(2) if abs(pre[i, j]) <= ZERO_BAND]


def _pinned_g(theta: Parameters) -> np.ndarray:
    return (preactivations(theta) > ZERO_BAND).astype(float)


def _columns(theta: Parameters, g) -> np.ndarray:
    """4x2 matrix whose column i is ``y_i`` times dPhi(x_i)/dtheta under ``g``.

    With output weights (+1, -1) this is ``(x g_i1, g_i1, -x g_i2, -g_i2)``.
    """
    cols = np.empty((4, 2))
    for i, (x, y) in enumerate(TRAINING_SET):
        cols[:, i] = y * np.array([x * g[i][0], g[i][0], -x * g[i][1], -g[i][1]])
    return cols


def kkt_residuals(theta: Parameters, cert: KKTCertificate) -> KKTResiduals:
    """Evaluate each KKT condition exactly; no tolerance is applied.

    Raises
    ------
    ContractError
        If ``cert`` has a negative multiplier, a ``g`` entry outside
        [0, 1], or contradicts a strictly signed preactivation.
    """
    g = np.asarray(cert.g, dtype=float)
    if g.shape != (2, 2) or (g < 0).any() or (g > 1).any():
        raise ContractError("g must be a 2x2 matrix with entries in [0, 1]")
    if cert.lambda1 < 0 or cert.lambda2 < 0:
        raise ContractError("multipliers must be non-negative")
    pre = preactivations(theta)
    if ((pre > ZERO_BAND) & (g != 1.0)).any() or ((pre < -ZERO_BAND) & (g != 0.0)).any():
        raise ContractError("g contradicts a strictly signed preactivation")
    lam = np.array([cert.lambda1, cert.lambda2])
    station = theta.asarray() - _columns(theta, g) @ lam
    slack = tuple(m - 1.0 for m in per_instance_margins(theta))
    return KKTResiduals(
        stationarity=float(np.max(np.abs(station))),
        feasibility=slack,
        dual_feasibility=float(lam.min()),
        complementarity=float(max(abs(lam[i] * slack[i]) for i in range(2))),
    )


def nnls2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Non-negative least squares ``min ||a lam - b||`` for two unknowns.

    The optimum lies on one of four faces of the orthant; each face has a
    closed-form minimiser and the best feasible one wins.
    """
    cands = [np.zeros(2)]
    for k in range(2):
        col = a[:, k]
        nn = col @ col
        if nn > 0:
            lam = np.zeros(2)
            lam[k] = max(0.0, (col @ b) / nn)
            cands.append(lam)
    gram = a.T @ a
    det = gram[0, 0] * gram[1, 1] - gram[0, 1] * gram[1, 0]
    if abs(det) > 1e-14 * max(1.0, gram[0, 0] * gram[1, 1]):
        lam = np.linalg.solve(gram, a.T @ b)
        if (lam >= 0).all():
            cands.append(lam)
    return min(cands, key=lambda lam: float(np.sum((a @ lam - b) ** 2)))


def _candidate(theta: Parameters, g: np.ndarray) -> tuple:
    lam = nnls2(_columns(theta, g), theta.asarray())
    cert = KKTCertificate(float(lam[0]), float(lam[1]), tuple(tuple(float(v) for v in r) for r in g))
    return cert, kkt_residuals(theta, cert)


def find_certificate(theta: Parameters, tol: float) -> Optional[KKTCertificate]:
    """Search for a certificate whose residuals are all within ``tol``.

    Free ``g`` entries are scanned on a 0.05 grid with the multipliers
    solved by non-negative least squares on the stationarity equations;
    the best grid point is then polished by coordinate descent over the
    free entries.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    free = free_entries(theta)
    base = _pinned_g(theta)
    levels = np.round(np.arange(0.0, 1.0 + 0.5 * GRID_STEP, GRID_STEP), 12)
    best = None
    for combo in itertools.product(levels, repeat=len(free)):
        g = base.copy()
        for (i, j), v in zip(free, combo):
            g[i, j] = v
        cert, res = _candidate(theta, g)
        if best is None or res.worst() < best[1].worst():
            best = (cert, res, g)
    cert, res, g = best
    if free and res.worst() > tol:
        cert, res = _polish(theta, g, free, res)
    return cert if res.worst() <= tol else None


def _polish(theta, g, free, res):
    g = g.copy()
    cert, best = _candidate(theta, g)
    step = GRID_STEP
    while step > 1e-12:
        improved = False
        for i, j in free:
            for d in (step, -step):
                trial = g.copy()
                trial[i, j] = min(1.0, max(0.0, trial[i, j] + d))
                c, r = _candidate(theta, trial)
                if r.worst() < best.worst():
                    g, cert, best, improved = trial, c, r, True
        if not improved:
            step *= 0.5
    return cert, best


def is_kkt_point(theta: Parameters, tol: float) -> bool:
    return find_certificate(theta, tol) is not None


def analytic_certificate() -> KKTCertificate:
    """The hand-derived certificate at the max-margin point."""
    return KKTCertificate(0.5, 0.5, ((0.0, 1.0), (1.0, 0.0)))


@dataclass(frozen=True)
class ScanHit:
    direction: Parameters  # unit vector on the grid
    theta: Parameters  # rescaled so min_i y_i Phi(x_i) = 1
    certificate: KKTCertificate
    residuals: KKTResiduals

    def to_dict(self) -> dict:
        return {
            "direction": list(self.direction.astuple()),
            "theta": list(self.theta.astuple()),
            "certificate": self.certificate.to_dict(),
            "residuals": self.residuals.to_dict(),
        }


def sphere_grid(resolution: float, anchor: Parameters = THETA_STAR) -> np.ndarray:
    """Unit vectors on a hyperspherical-angle grid through ``anchor``.

    Angles ``(a, b, c)`` map to
    ``(cos a, sin a cos b, sin a sin b cos c, sin a sin b sin c)``; each
    angle runs over ``anchor_angle + k * resolution`` within its range.
    """
    x = anchor.asarray() / anchor.norm()
    a0 = math.acos(x[0])
    b0 = math.atan2(math.hypot(x[2], x[3]), x[1])
    c0 = math.atan2(x[3], x[2])

    def axis(centre, lo, hi):
        ks = np.arange(math.ceil((lo - centre) / resolution), math.floor((hi - centre) / resolution) + 1)
        return centre + ks * resolution

    a = axis(a0, 0.0, math.pi)
    b = axis(b0, 0.0, math.pi)
    c = axis(c0, c0 - math.pi + 1e-12, c0 + math.pi)
    A, B, C = np.meshgrid(a, b, c, indexing="ij")
    sa, sb = np.sin(A), np.sin(B)
    pts = np.stack([np.cos(A), sa * np.cos(B), sa * sb * np.cos(C), sa * sb * np.sin(C)], axis=-1)
    return pts.reshape(-1, 4)


def _signed_outputs(pts: np.ndarray) -> np.ndarray:
    w1, b1, w2, b2 = pts.T
    out = []
    for x, y in TRAINING_SET:
        phi = np.maximum(w1 * x + b1, 0) - np.maximum(w2 * x + b2, 0)
        out.append(y * phi)
    return np.stack(out, axis=1)


def _batch_pinned_worst(thetas: np.ndarray) -> np.ndarray:
    """Worst KKT residual per row when no ``g`` entry is free.

    Vectorised form of ``nnls2`` plus the residuals.  Rows with a free
    entry get ``-inf`` so the caller sends them to the exact search.
    """
    w1, b1, w2, b2 = thetas.T
    pre = np.stack([-w1 + b1, -w2 + b2, w1 + b1, w2 + b2], axis=1)  # (x=-1: j1, j2), (x=+1: j1, j2)
    g = (pre > ZERO_BAND).astype(float)
    # column for instance i is y_i (x_i g_i1, g_i1, -x_i g_i2, -g_i2)
    col1 = -np.stack([-g[:, 0], g[:, 0], g[:, 1], -g[:, 1]], axis=1)
    col2 = np.stack([g[:, 2], g[:, 2], -g[:, 3], -g[:, 3]], axis=1)
    a = np.stack([col1, col2], axis=2)  # (N, 4, 2)
    n = len(thetas)
    cands = [np.zeros((n, 2))]
    for k in range(2):
        col = a[:, :, k]
        nn = np.einsum("ij,ij->i", col, col)
        lam = np.zeros((n, 2))
        with np.errstate(invalid="ignore", divide="ignore"):
            lam[:, k] = np.where(nn > 0, np.maximum(0.0, np.einsum("ij,ij->i", col, thetas) / nn), 0.0)
        cands.append(lam)
    gram = np.einsum("nik,nil->nkl", a, a)
    det = gram[:, 0, 0] * gram[:, 1, 1] - gram[:, 0, 1] * gram[:, 1, 0]
    ok = np.abs(det) > 1e-14 * np.maximum(1.0, gram[:, 0, 0] * gram[:, 1, 1])
    rhs = np.einsum("nik,ni->nk", a, thetas)
    safe = np.where(ok, det, 1.0)
    full = np.stack(
        [(gram[:, 1, 1] * rhs[:, 0] - gram[:, 0, 1] * rhs[:, 1]) / safe,
         (gram[:, 0, 0] * rhs[:, 1] - gram[:, 1, 0] * rhs[:, 0]) / safe], axis=1)
    full[~(ok & (full >= 0).all(axis=1))] = 0.0
    cands.append(full)
    sq = np.stack([np.sum((np.einsum("nik,nk->ni", a, lam) - thetas) ** 2, axis=1) for lam in cands])
    lam = np.stack(cands)[np.argmin(sq, axis=0), np.arange(n)]
    station = np.max(np.abs(thetas - np.einsum("nik,nk->ni", a, lam)), axis=1)
    slack = _signed_outputs(thetas) - 1.0
    worst = np.maximum.reduce([
        station,
        np.maximum(0.0, -slack.min(axis=1)),
        np.max(np.abs(lam * slack), axis=1),
    ])
    has_free = (np.abs(pre) <= ZERO_BAND).any(axis=1)
    worst[has_free] = -np.inf
    return worst


def scan_kkt_directions(resolution: float = 0.05, tol: float = 1e-3) -> list:
    """Test every grid direction, rescaled to unit normalized margin.

    Directions where some instance has a non-positive signed output can
    never be rescaled onto the feasible set and are skipped.

    Returns
    -------
    list of ScanHit
        In grid order.
    """
    if not 0 < resolution <= 0.2:
        raise ValueError(f"resolution must be in (0, 0.2], got {resolution}")
    pts = sphere_grid(resolution)
    margins = _signed_outputs(pts).min(axis=1)
    feasible = np.nonzero(margins > 0)[0]
    scaled = pts[feasible] / margins[feasible, None]
    # the batch pass is exact for pinned g; keep a wide margin before rejecting
    keep = _batch_pinned_worst(scaled) <= 10 * tol
    hits = []
    for k in feasible[keep]:
        direction = Parameters(*pts[k])
        theta = direction.scaled(1.0 / margins[k])
        cert = find_certificate(theta, tol)
        if cert is not None:
            hits.append(ScanHit(direction, theta, cert, kkt_residuals(theta, cert)))
    return hits


def scan_document(hits: list, resolution: float, tol: float) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "resolution": resolution,
        "tol": tol,
        "n_accepted": len(hits),
        "accepted": [h.to_dict() for h in hits],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
