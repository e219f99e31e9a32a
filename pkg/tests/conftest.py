import numpy as np
import pytest
from hypothesis import settings

from slowmargin.model import Parameters

# first calls include JIT compilation
settings.register_profile("default", deadline=None)
settings.load_profile("default")

_VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in _VERDICTS:
        terminalreporter.write_line(line)


@pytest.fixture
def verdict():
    """Record and print one pass/fail line for an acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok

    return record


def sample_pattern(rng, pattern, n, lo=-3.0, hi=3.0, min_pre=1e-3):
    """Rejection-sample ``n`` parameter vectors in the given pattern.

    Every preactivation is at least ``min_pre`` in magnitude so no point
    sits on a kink.
    """
    from slowmargin._scalar import pattern_code

    out = []
    while len(out) < n:
        th = rng.uniform(lo, hi, size=(4096, 4))
        w1, b1, w2, b2 = th.T
        pre = np.stack([-w1 + b1, w1 + b1, -w2 + b2, w2 + b2], axis=1)
        ok = np.abs(pre).min(axis=1) >= min_pre
        for row in th[ok]:
            if pattern_code(*row) == pattern.code:
                out.append(Parameters(*row))
                if len(out) == n:
                    break
    return out


def sample_overlap_start(rng):
    """A start with w1 > 0 > w2 and -1 < beta1 < beta2 < 1."""
    w1 = rng.uniform(0.2, 3.0)
    w2 = -rng.uniform(0.2, 3.0)
    beta1, beta2 = np.sort(rng.uniform(-0.95, 0.95, size=2))
    return Parameters(w1, -beta1 * w1, w2, -beta2 * w2)
