"""Nominal single-player iterative LQG.

The disturbance channel, if the model has one, is held at the values
stored in the trajectory (zero for nominal runs).
"""

from __future__ import annotations

import numpy as np

from .idg import _backward, _forward
from .trajectory import (
    BackwardResult,
    GainSchedule,
    RegState,
    SolveReport,
    SolverOptions,
    Trajectory,
    optimize,
    rollout,
    update_rho,
)


def backward_pass(lm, reg, mode="control", second_order=False, eig_clamp=False):
    """Single-player backward pass.

    Gains are ``g_u = -Q_uu~^-1 Q_u`` and ``G_u = -Q_uu~^-1 Q_ux`` with the
    regularized ``Q_uu~``; the value model uses the unregularized blocks.
    Returns a :class:`BackwardResult` whose ``d1``/``d2`` are
    ``sum(g_u^T Q_u)`` and ``sum(g_u^T Q_uu g_u)``. Raises
    :class:`FailureAtStep` when ``Q_uu~`` is not positive definite.
    """
    return _backward(lm, reg, mode, second_order, eig_clamp, with_adversary=False)


def forward_pass(model, cost, traj, gains, step):
    """Roll out ``u + step g_u + G_u (x_new - x)`` with ``v`` held fixed."""
    if not 0 <= step <= 1:
        raise ValueError("line-search step must lie in [0, 1]")
    return _forward(model, cost, traj, gains, step, update_v=False)


def solve(model, cost, x0, us_init, options=None, vs=None):
    """Optimize the controls of ``model`` from ``x0``.

    Returns ``(trajectory, gains, report)``; raises
    :class:`~robust_idg.exceptions.NoProgress` when no step can be accepted
    before ``rho`` exceeds ``options.rho_max``.
    """
    options = options or SolverOptions()
    traj = rollout(model, cost, np.asarray(x0, dtype=float), us_init, vs)

    def backward(lm, reg):
        return backward_pass(lm, reg, options.regularization, options.second_order, options.eig_clamp)

    def forward(tr, gains, step):
        return forward_pass(model, cost, tr, gains, step)

    return optimize(model, cost, traj, backward, forward, options, monotone=True)


__all__ = [
    "BackwardResult",
    "GainSchedule",
    "RegState",
    "SolveReport",
    "SolverOptions",
    "Trajectory",
    "backward_pass",
    "forward_pass",
    "rollout",
    "solve",
    "update_rho",
]
