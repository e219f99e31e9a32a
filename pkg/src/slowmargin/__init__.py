"""Gradient-descent dynamics and max-margin checks for a two-neuron ReLU classifier."""

from .errors import ContractError, DivergenceError, DomainError, NotApplicable, PhaseGraphError
from .model import (
    THETA_STAR,
    TRAINING_SET,
    BoundarySet,
    DerivedQuantities,
    Parameters,
    decision_boundary,
    eval_network,
    loss,
    margin_gap,
    robustness_margin,
)
from .patterns import ALLOWED_EDGES, ActivationPattern
from .trajectory import TerminalStatus, TrajectoryLog

__version__ = "0.1.0"
