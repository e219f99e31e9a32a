"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class DivergenceError(ArithmeticError):
    """A loss exponent exceeded the overflow guard or a step went non-finite.

    Attributes
    ----------
    exponent : float
        The offending per-instance exponent (``inf`` for a non-finite step).
    step : int or None
        Iteration index at which the failure happened, when known.
    """

    def __init__(self, exponent, step=None):
        self.exponent = float(exponent)
        self.step = step
        where = "" if step is None else f" at step {step}"
        super().__init__(f"loss exponent {self.exponent:.6g} exceeds guard{where}")


class ContractError(RuntimeError):
    """A caller broke an operation's precondition (e.g. wrong pattern)."""


class NotApplicable(Exception):
    """The hypotheses of a bound do not hold for the given inputs."""

    def __init__(self, reason):
        self.reason = reason
        super().__init__(reason)


class PhaseGraphError(RuntimeError):
    """A trajectory used a pattern transition outside the allowed graph."""

    def __init__(self, t, source, target):
        self.t = t
        self.source = source
        self.target = target
        super().__init__(f"disallowed transition {source} -> {target} at step {t}")
