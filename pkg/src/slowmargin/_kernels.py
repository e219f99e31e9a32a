"""Compiled iteration loops for gradient descent and gradient flow.

The loop is resumable: it stops early when the record buffers fill up and
returns its full state, so the Python driver can flush rows and continue.
"""

import math

import numpy as np

from ._scalar import jit, loss_and_grad, margin, pattern_code, unique_crossing

# step schemes
GD = 0
RK4 = 1

# record policies
RECORD_ALL = 0
RECORD_THINNED = 1
RECORD_ENDPOINTS = 2

# loop status codes
BUFFER_FULL = 0
ITERATION_CAP = 1
EQUILIBRIUM = 2
DIVERGED = 3
NEVER_CLASSIFIED = 4
LOSS_TOL = 5

FULL_RECORD_STEPS = 1000
THIN_RATIO = 1.1


@jit
def _rk4_step(w1, b1, w2, b2, h):
    # returns the new state and the worst exponent seen in any stage
    _, a1, a2, a3, a4, z = loss_and_grad(w1, b1, w2, b2)
    worst = z
    _, c1, c2, c3, c4, z = loss_and_grad(
        w1 - 0.5 * h * a1, b1 - 0.5 * h * a2, w2 - 0.5 * h * a3, b2 - 0.5 * h * a4
    )
    worst = max(worst, z)
    _, d1, d2, d3, d4, z = loss_and_grad(
        w1 - 0.5 * h * c1, b1 - 0.5 * h * c2, w2 - 0.5 * h * c3, b2 - 0.5 * h * c4
    )
    worst = max(worst, z)
    _, e1, e2, e3, e4, z = loss_and_grad(
        w1 - h * d1, b1 - h * d2, w2 - h * d3, b2 - h * d4
    )
    worst = max(worst, z)
    s = h / 6.0
    return (
        w1 - s * (a1 + 2.0 * c1 + 2.0 * d1 + e1),
        b1 - s * (a2 + 2.0 * c2 + 2.0 * d2 + e2),
        w2 - s * (a3 + 2.0 * c3 + 2.0 * d3 + e3),
        b2 - s * (a4 + 2.0 * c4 + 2.0 * d4 + e4),
        worst,
    )


@jit
def advance(
    state,
    ctrl,
    h,
    method,
    policy,
    t_end,
    classify_cap,
    eq_tol,
    loss_stop,
    out_t,
    out_theta,
    out_loss,
    out_code,
    out_xstar,
    out_margin,
):
    """Iterate from ``state`` until a stop rule fires or the buffers fill.

    ``state`` holds (w1, b1, w2, b2) and is updated in place.  ``ctrl``
    holds (t, next_thin, prev_code, classified, worst_exponent) as floats
    and is updated in place.  Negative ``classify_cap``, ``eq_tol`` or
    ``loss_stop`` disable that rule.  Returns (status, rows_written).
    """
    w1 = state[0]
    b1 = state[1]
    w2 = state[2]
    b2 = state[3]
    t = np.int64(ctrl[0])
    next_thin = ctrl[1]
    prev_code = np.int64(ctrl[2])
    classified = ctrl[3] > 0.0
    cap = out_t.shape[0]
    row = 0
    status = BUFFER_FULL
    while True:
        loss, g1, g2, g3, g4, worst = loss_and_grad(w1, b1, w2, b2)
        if math.isnan(loss):
            ctrl[4] = worst
            status = DIVERGED
            break
        code = pattern_code(w1, b1, w2, b2)
        newly = loss < 0.5 and not classified
        if loss < 0.5:
            classified = True
        stop = BUFFER_FULL
        if (not classified) and classify_cap >= 0 and t >= classify_cap:
            stop = NEVER_CLASSIFIED
        elif classified and eq_tol >= 0.0 and abs(w1 + w2 + b1 - b2) <= eq_tol:
            stop = EQUILIBRIUM
        elif loss_stop >= 0.0 and loss <= loss_stop:
            stop = LOSS_TOL
        elif t >= t_end:
            stop = ITERATION_CAP

        record = t == 0 or stop != BUFFER_FULL or policy == RECORD_ALL
        if newly and policy != RECORD_ENDPOINTS:
            record = True
        if policy != RECORD_ENDPOINTS and code != prev_code:
            record = True
        thin_hit = False
        if policy == RECORD_THINNED and (t < FULL_RECORD_STEPS or t >= next_thin):
            record = True
            thin_hit = t >= next_thin
        if record:
            if row == cap:
                status = BUFFER_FULL
                break
            out_t[row] = t
            out_theta[row, 0] = w1
            out_theta[row, 1] = b1
            out_theta[row, 2] = w2
            out_theta[row, 3] = b2
            out_loss[row] = loss
            out_code[row] = code
            out_xstar[row] = unique_crossing(w1, b1, w2, b2)
            out_margin[row] = margin(w1, b1, w2, b2)
            row += 1
            if thin_hit:
                while next_thin <= t:
                    next_thin *= THIN_RATIO
        prev_code = code
        if stop != BUFFER_FULL:
            status = stop
            break

        if method == GD:
            n1 = w1 - h * g1
            n2 = b1 - h * g2
            n3 = w2 - h * g3
            n4 = b2 - h * g4
        else:
            n1, n2, n3, n4, worst = _rk4_step(w1, b1, w2, b2, h)
            if math.isnan(n1) or worst > 700.0:
                ctrl[4] = worst
                status = DIVERGED
                break
        if not (
            math.isfinite(n1) and math.isfinite(n2) and math.isfinite(n3) and math.isfinite(n4)
        ):
            ctrl[4] = math.inf
            status = DIVERGED
            break
        w1 = n1
        b1 = n2
        w2 = n3
        b2 = n4
        t += 1

    state[0] = w1
    state[1] = b1
    state[2] = w2
    state[3] = b2
    ctrl[0] = t
    ctrl[1] = next_thin
    ctrl[2] = prev_code
    ctrl[3] = 1.0 if classified else 0.0
    return status, row
