"""Activation-pattern tags and the allowed transitions between them."""

import enum

from . import _scalar


class ActivationPattern(enum.Enum):
    """Which neuron is strictly active on which training point."""

    LINEAR = "LinearBothActive"
    CASE1 = "Case1_RightBothLeftSpec"
    CASE2 = "Case2_LeftBothRightSpec"
    CASE3 = "Case3_BothRightActive"
    CASE4 = "Case4_BothLeftActive"
    OVERLAP = "SpecializedOverlap"
    DEAD = "SpecializedDeadInterval"
    DEGENERATE = "Degenerate"

    @property
    def code(self) -> int:
        return _CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "ActivationPattern":
        return _MEMBERS[int(code)]

    @property
    def specialized(self) -> bool:
        return self in (ActivationPattern.OVERLAP, ActivationPattern.DEAD)


_MEMBERS = list(ActivationPattern)
_CODES = {p: i for i, p in enumerate(_MEMBERS)}
assert _CODES[ActivationPattern.OVERLAP] == _scalar.OVERLAP
assert _CODES[ActivationPattern.DEGENERATE] == _scalar.DEGENERATE

P = ActivationPattern

# Pattern changes permitted once the loss is below 0.5.  Case3 -> Case2 and
# Case4 -> Case1 occur when the co-active neuron drops one point first.
ALLOWED_EDGES = frozenset(
    [(P.LINEAR, p) for p in (P.CASE1, P.CASE2, P.CASE3, P.CASE4, P.OVERLAP, P.DEAD)]
    + [(c, s) for c in (P.CASE1, P.CASE2, P.CASE3, P.CASE4) for s in (P.OVERLAP, P.DEAD)]
    + [(P.CASE3, P.CASE2), (P.CASE4, P.CASE1), (P.DEAD, P.OVERLAP)]
)


