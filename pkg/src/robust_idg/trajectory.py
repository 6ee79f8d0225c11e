"""Trajectories, the regularization schedule and the outer optimization loop
shared by the single-player and two-player solvers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .exceptions import DivergedRollout, FailureAtStep, NoProgress, NonFiniteState

logger = logging.getLogger(__name__)


@dataclass
class Trajectory:
    """States ``xs`` (T+1, n), controls ``us`` (T, m), disturbances ``vs`` (T, p).

    ``stage_costs`` has T+1 entries, the last one being the terminal cost;
    ``cost`` is their sum.
    """

    xs: np.ndarray
    us: np.ndarray
    vs: np.ndarray
    stage_costs: np.ndarray
    cost: float

    @property
    def horizon(self):
        return len(self.us)

    def final_distance(self, goal, dims=(0, 1)):
        """Euclidean distance of the final state to ``goal`` on ``dims``."""
        dims = list(dims)
        return float(np.linalg.norm(self.xs[-1, dims] - np.asarray(goal, dtype=float)[dims]))


@dataclass
class GainSchedule:
    """Open-loop and feedback terms for both players, one row per step."""

    g_u: np.ndarray
    G_u: np.ndarray
    g_v: np.ndarray
    G_v: np.ndarray
    K_u: np.ndarray
    K_v: np.ndarray

    @classmethod
    def zeros(cls, T, n, m, p):
        return cls(
            np.zeros((T, m)),
            np.zeros((T, m, n)),
            np.zeros((T, p)),
            np.zeros((T, p, n)),
            np.zeros((T, m, m)),
            np.zeros((T, p, p)),
        )


@dataclass(frozen=True)
class RegState:
    rho: float = 1.0
    rho0: float = 1.0
    up_factor: float = 1.1
    down_factor: float = 0.09

    def __post_init__(self):
        if self.rho < 0 or not self.rho0 > 0:
            raise ValueError("need rho >= 0 and rho0 > 0")


def update_rho(reg, direction):
    """Multiplicative schedule: ``rho <- factor * rho0`` then ``rho0 <- rho``."""
    if direction == "increase":
        rho = reg.up_factor * reg.rho0
    elif direction == "reduce":
        rho = reg.down_factor * reg.rho0
    else:
        raise ValueError(f"direction must be 'increase' or 'reduce', got {direction!r}")
    return replace(reg, rho=rho, rho0=rho)


def default_step_sizes(factor=0.7, smallest=1e-3):
    steps = []
    s = 1.0
    while s >= smallest:
        steps.append(s)
        s *= factor
    return tuple(steps)


@dataclass
class SolverOptions:
    """Settings shared by :func:`ilqg.solve` and :func:`idg.idg_solve`.

    ``chi=None`` means ``1e-6 * (1 + |J|)``. ``expected_reduction_in``
    selects whether the predicted change is scaled by the regularizer
    (``"rho"``) or by the line-search step (``"sigma"``).
    ``regularization`` is ``"control"`` (``rho I``), ``"state"``
    (``rho f_u^T f_u``) or ``"both"``.
    """

    c: float = 0.5
    chi: Optional[float] = None
    max_iters: int = 50
    step_sizes: tuple = field(default_factory=default_step_sizes)
    rho0: float = 1.0
    rho_max: float = 1e10
    rho_min: float = 0.0
    regularization: str = "control"
    second_order: bool = False
    expected_reduction_in: str = "rho"
    eig_clamp: bool = False
    seed: int = 0
    redraw: bool = False
    filter_width: int = 5
    noise_variance: float = 2.0

    def __post_init__(self):
        if not 0 < self.c:
            raise ValueError("acceptance constant c must be positive")
        if any(not 0 < s <= 1 for s in self.step_sizes):
            raise ValueError("line-search steps must lie in (0, 1]")
        if self.regularization not in ("control", "state", "both"):
            raise ValueError(f"unknown regularization {self.regularization!r}")
        if self.expected_reduction_in not in ("rho", "sigma"):
            raise ValueError("expected_reduction_in must be 'rho' or 'sigma'")


@dataclass
class SolveReport:
    iterations: int = 0
    cost_trace: list = field(default_factory=list)
    eta_trace: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    rho_trace: list = field(default_factory=list)
    expected_trace: list = field(default_factory=list)
    step_trace: list = field(default_factory=list)
    dV_trace: list = field(default_factory=list)
    initial_cost: float = float("nan")
    converged: bool = False
    reason: str = ""

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "initial_cost": self.initial_cost,
            "cost_trace": [float(c) for c in self.cost_trace],
            "eta_trace": [float(e) for e in self.eta_trace],
            "accepted": [bool(a) for a in self.accepted],
            "rho_trace": [float(r) for r in self.rho_trace],
            "expected_trace": [float(e) for e in self.expected_trace],
            "step_trace": [float(s) for s in self.step_trace],
            "dV_trace": [float(d) for d in self.dV_trace],
            "converged": self.converged,
            "reason": self.reason,
        }


def rollout(model, cost, x0, us, vs=None):
    """Simulate ``model`` from ``x0`` under ``us`` (and ``vs``) and price it."""
    us = np.atleast_2d(np.asarray(us, dtype=float))
    T = len(us)
    if vs is None:
        vs = np.zeros((T, model.p))
    vs = np.asarray(vs, dtype=float).reshape(T, -1)
    xs = np.empty((T + 1, len(x0)))
    xs[0] = x0
    for t in range(T):
        try:
            xs[t + 1] = model.step(xs[t], us[t], vs[t], t)
        except NonFiniteState as exc:
            raise DivergedRollout(t) from exc
        if not np.all(np.isfinite(xs[t + 1])):
            raise DivergedRollout(t)
    return price(cost, xs, us.copy(), vs.copy())


def price(cost, xs, us, vs):
    """Wrap simulated sequences in a :class:`Trajectory` with its costs."""
    T = len(us)
    costs = np.empty(T + 1)
    for t in range(T):
        costs[t] = cost.stage(xs[t], us[t], vs[t], t)
    costs[T] = cost.terminal(xs[T])
    if not np.all(np.isfinite(costs)):
        raise DivergedRollout(T, "rollout cost is not finite")
    return Trajectory(xs, us, vs, costs, float(np.sum(costs)))


@dataclass
class LocalModel:
    """Per-step linearized dynamics and quadratized costs along a trajectory."""

    dynamics: list
    stages: list
    terminal: tuple

    @property
    def horizon(self):
        return len(self.dynamics)


def local_model(model, cost, traj, second_order=False):
    dyn, stages = [], []
    for t in range(traj.horizon):
        x, u, v = traj.xs[t], traj.us[t], traj.vs[t]
        dyn.append(model.linearize(x, u, v, t, second_order=second_order))
        stages.append(cost.stage_quadratic(x, u, v, t))
    return LocalModel(dyn, stages, cost.terminal_quadratic(traj.xs[-1]))


@dataclass
class BackwardResult:
    """Output of a backward pass.

    ``d1 = sum(g^T Q_g)``, ``d2 = sum(g^T Q_gg g)`` over both players and
    ``dc = sum(g_u^T Q_uv g_v)``; ``values`` holds ``(V_x, V_xx)`` for
    t = 0..T.
    """

    gains: GainSchedule
    d1: float
    d2: float
    dc: float
    values: list
    dV: float = 0.0


def expected_reduction(result, step, reg, mode):
    """Predicted decrease of the total cost for line-search step ``step``.

    ``mode="sigma"`` scales the first- and second-order sums by ``step``
    and ``step**2 / 2``; ``mode="rho"`` uses the regularizer instead.
    """
    s = reg.rho if mode == "rho" else step
    return -(s * result.d1 + 0.5 * s * s * result.d2 + s * s * result.dc)


def optimize(model, cost, traj, backward, forward, options, redraw=None, monotone=False):
    """Outer loop: backward pass with rho retries, line search, acceptance.

    ``backward(local_model, reg)`` returns a :class:`BackwardResult` or raises
    :class:`FailureAtStep`; ``forward(traj, gains, step)`` returns a new
    trajectory. A step is accepted when the ratio of actual to predicted
    reduction exceeds ``options.c``; with ``monotone`` (single-player runs)
    the cost must also strictly drop.
    """
    reg = RegState(rho=options.rho0, rho0=options.rho0)
    report = SolveReport(initial_cost=traj.cost)
    gains = GainSchedule.zeros(traj.horizon, model.n, model.m, model.p)

    def bail(reason):
        report.reason = reason
        raise NoProgress(reason, result=(traj, gains, report))

    for it in range(options.max_iters):
        if redraw is not None:
            traj = redraw(traj, it)
        lm = local_model(model, cost, traj, options.second_order)
        while True:
            try:
                result = backward(lm, reg)
                break
            except FailureAtStep as exc:
                reg = update_rho(reg, "increase")
                logger.debug("backward failure at t=%d, rho -> %.3g", exc.t, reg.rho)
                if reg.rho > options.rho_max:
                    bail(f"backward pass failed at rho={reg.rho:.3g}")
        gains = result.gains
        report.iterations = it + 1
        report.dV_trace.append(result.dV)
        chi = options.chi if options.chi is not None else 1e-6 * (1.0 + abs(traj.cost))
        full = expected_reduction(result, 1.0, reg, options.expected_reduction_in)
        if abs(full) < chi:
            report.cost_trace.append(traj.cost)
            report.eta_trace.append(float("nan"))
            report.accepted.append(False)
            report.rho_trace.append(reg.rho)
            report.expected_trace.append(full)
            report.step_trace.append(0.0)
            report.converged = True
            report.reason = "expected reduction below chi"
            return traj, gains, report

        accepted = False
        eta = float("nan")
        for s in options.step_sizes:
            try:
                cand = forward(traj, gains, s)
            except DivergedRollout:
                continue
            expected = expected_reduction(result, s, reg, options.expected_reduction_in)
            eta = (traj.cost - cand.cost) / expected if expected != 0 else float("nan")
            if eta > options.c and (not monotone or cand.cost < traj.cost):
                accepted = True
                break
        report.rho_trace.append(reg.rho)
        report.accepted.append(accepted)
        if accepted:
            traj = cand
            report.eta_trace.append(eta)
            report.expected_trace.append(expected)
            report.step_trace.append(s)
            reg = update_rho(reg, "reduce")
            if reg.rho < options.rho_min:
                reg = replace(reg, rho=options.rho_min, rho0=options.rho_min)
        else:
            report.eta_trace.append(eta)
            report.expected_trace.append(full)
            report.step_trace.append(0.0)
            reg = update_rho(reg, "increase")
            if reg.rho > options.rho_max:
                report.cost_trace.append(traj.cost)
                bail(f"line search failed at rho={reg.rho:.3g}")
        report.cost_trace.append(traj.cost)
        logger.debug(
            "iter %d J=%.6g eta=%.3g accepted=%s rho=%.3g", it, traj.cost, report.eta_trace[-1], accepted, reg.rho
        )

    report.reason = "iteration cap"
    return traj, gains, report
