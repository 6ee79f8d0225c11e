"""Iterative LQG, the minimax iterative dynamic game and robustness
curves for frozen feedback policies."""

from .costs import CostParams, GoalCost, QuadraticCost, QuadraticGameParams
from .dynamics import LTISystem, MecanumParams, MecanumPlatform
from .exceptions import (
    BoundaryHit,
    ConcavityViolated,
    ConfigError,
    DivergedRollout,
    FailureAtStep,
    HorizonMismatch,
    NoProgress,
    NonFiniteState,
    SaddleIllConditioned,
)
from .idg import idg_solve
from .ilqg import solve as ilqg_solve
from .robustness import FrozenPolicy, close_loop, optimize_adversary, sweep
from .trajectory import RegState, SolverOptions, Trajectory, update_rho

__version__ = "0.1.0"

__all__ = [
    "BoundaryHit",
    "ConcavityViolated",
    "ConfigError",
    "CostParams",
    "DivergedRollout",
    "FailureAtStep",
    "FrozenPolicy",
    "GoalCost",
    "HorizonMismatch",
    "LTISystem",
    "MecanumParams",
    "MecanumPlatform",
    "NoProgress",
    "NonFiniteState",
    "QuadraticCost",
    "QuadraticGameParams",
    "RegState",
    "SaddleIllConditioned",
    "SolverOptions",
    "Trajectory",
    "close_loop",
    "idg_solve",
    "ilqg_solve",
    "optimize_adversary",
    "sweep",
    "update_rho",
]
