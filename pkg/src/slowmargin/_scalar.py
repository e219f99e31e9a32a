"""Compiled scalar routines shared by the Python API and the hot loops.

Everything here takes the four parameters as separate floats so the same
compiled code serves single evaluations from :mod:`slowmargin.model` and
the long iterations in :mod:`slowmargin._kernels`.  Keeping one code path
means a logged trajectory and a hand-evaluated step agree bitwise.
"""

import math

import numba
import numpy as np

jit = numba.njit(cache=True, error_model="numpy")

# Exponents above this are treated as divergence instead of returning inf.
EXP_GUARD = 700.0

# Integer codes for activation patterns, in enum order.
LINEAR = 0
CASE1 = 1
CASE2 = 2
CASE3 = 3
CASE4 = 4
OVERLAP = 5
DEAD = 6
DEGENERATE = 7


@jit
def relu(z):
    return z if z > 0.0 else 0.0


@jit
def phi(w1, b1, w2, b2, x):
    return relu(w1 * x + b1) - relu(w2 * x + b2)


@jit
def loss_exponents(w1, b1, w2, b2):
    """Per-instance exponents ``y_i * (-Phi(x_i))`` for x = -1 and x = +1."""
    return phi(w1, b1, w2, b2, -1.0), -phi(w1, b1, w2, b2, 1.0)


@jit
def loss_and_grad(w1, b1, w2, b2):
    """Loss and its gradient with ReLU'(0) = 0.

    Returns ``(loss, gw1, gb1, gw2, gb2, worst_exponent)``.  When the worst
    exponent exceeds ``EXP_GUARD`` the remaining entries are NaN and the
    caller must raise.
    """
    z1, z2 = loss_exponents(w1, b1, w2, b2)
    worst = z1 if z1 > z2 else z2
    if worst > EXP_GUARD:
        nan = math.nan
        return nan, nan, nan, nan, nan, worst
    e1 = 0.5 * math.exp(z1)
    e2 = 0.5 * math.exp(z2)
    # gate[i][j]: neuron j strictly active on instance i
    g11 = 1.0 if -w1 + b1 > 0.0 else 0.0
    g12 = 1.0 if -w2 + b2 > 0.0 else 0.0
    g21 = 1.0 if w1 + b1 > 0.0 else 0.0
    g22 = 1.0 if w2 + b2 > 0.0 else 0.0
    # dL = e1 * dPhi(-1) - e2 * dPhi(+1), dPhi(x) = (x g1, g1, -x g2, -g2)
    gw1 = -e1 * g11 - e2 * g21
    gb1 = e1 * g11 - e2 * g21
    gw2 = e1 * g12 + e2 * g22
    gb2 = -e1 * g12 + e2 * g22
    return e1 + e2, gw1, gb1, gw2, gb2, worst


@jit
def pattern_code(w1, b1, w2, b2):
    a11 = -w1 + b1 > 0.0
    a21 = w1 + b1 > 0.0
    a12 = -w2 + b2 > 0.0
    a22 = w2 + b2 > 0.0
    if a11 and a21 and a12 and a22:
        return LINEAR
    if (not a11) and a21 and a12 and (not a22):
        # activity alone forces w1 > 0 and w2 < 0
        if -b1 / w1 < -b2 / w2:
            return OVERLAP
        return DEAD
    if a11 and a21 and a12 and (not a22):
        if w1 > 0.0:
            return CASE1
        if w1 < 0.0:
            return CASE4
        return DEGENERATE
    if (not a11) and a21 and a12 and a22:
        if w2 < 0.0:
            return CASE2
        if w2 > 0.0:
            return CASE3
        return DEGENERATE
    return DEGENERATE


@jit
def _piece_line(w1, b1, w2, b2, probe):
    """Slope and intercept of Phi on the linear piece containing ``probe``."""
    slope = 0.0
    icpt = 0.0
    if w1 * probe + b1 > 0.0:
        slope += w1
        icpt += b1
    if w2 * probe + b2 > 0.0:
        slope -= w2
        icpt -= b2
    return slope, icpt


@jit
def _push(buf, n, p):
    # keep the buffer sorted-unique; pieces are visited left to right
    if n > 0 and abs(p - buf[n - 1]) <= 1e-12 * (1.0 + abs(p)):
        return n
    buf[n] = p
    return n + 1


@jit
def boundary_points(w1, b1, w2, b2):
    """Ends of the zero set of Phi, solved piece by piece.

    Returns ``(buf, n, constant)`` where ``buf[:n]`` are strictly
    increasing points with Phi = 0 that border a region of nonzero output,
    and ``constant`` flags a network with zero slope everywhere.
    """
    buf = np.empty(6)
    lo_k = math.inf
    hi_k = math.inf
    nk = 0
    # a kink pushed to +-inf by a tiny slope is no kink at float scale
    if w1 != 0.0 and math.isfinite(-b1 / w1):
        lo_k = -b1 / w1
        nk = 1
    if w2 != 0.0 and math.isfinite(-b2 / w2):
        k = -b2 / w2
        if nk == 0:
            lo_k = k
            nk = 1
        elif k != lo_k:
            hi_k = k if k > lo_k else lo_k
            lo_k = k if k < lo_k else lo_k
            nk = 2
    edges = np.empty(nk + 2)
    edges[0] = -math.inf
    if nk >= 1:
        edges[1] = lo_k
    if nk == 2:
        edges[2] = hi_k
    edges[nk + 1] = math.inf

    n = 0
    constant = True
    for p in range(nk + 1):
        lo = edges[p]
        hi = edges[p + 1]
        if lo == -math.inf and hi == math.inf:
            probe = 0.0
        elif lo == -math.inf:
            probe = hi - 1.0
        elif hi == math.inf:
            probe = lo + 1.0
        else:
            probe = 0.5 * (lo + hi)
        slope, icpt = _piece_line(w1, b1, w2, b2, probe)
        if slope != 0.0:
            constant = False
            root = -icpt / slope
            if not math.isfinite(root):
                continue
            slack = 1e-12 * (1.0 + abs(root))
            if lo - slack <= root <= hi + slack:
                if root < lo:
                    root = lo
                if root > hi:
                    root = hi
                n = _push(buf, n, root)
        elif icpt == 0.0:
            # Phi vanishes on the whole piece; its finite ends border the zero set
            if lo != -math.inf:
                n = _push(buf, n, lo)
            if hi != math.inf:
                n = _push(buf, n, hi)
    if constant:
        n = 0
    return buf, n, constant


@jit
def unique_crossing(w1, b1, w2, b2):
    """The boundary point when there is exactly one, else NaN."""
    buf, n, constant = boundary_points(w1, b1, w2, b2)
    if n == 1:
        return buf[0]
    return math.nan


@jit
def margin(w1, b1, w2, b2):
    """Robustness margin; 0 if misclassified, inf with no boundary."""
    if not (phi(w1, b1, w2, b2, -1.0) < 0.0 and phi(w1, b1, w2, b2, 1.0) > 0.0):
        return 0.0
    buf, n, constant = boundary_points(w1, b1, w2, b2)
    best = math.inf
    for k in range(n):
        d = min(abs(buf[k] + 1.0), abs(buf[k] - 1.0))
        if d < best:
            best = d
    return best
