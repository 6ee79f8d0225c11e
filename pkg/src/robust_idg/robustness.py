"""Robustness curves: freeze a nominal policy, let an adversary optimize
against it for each gamma, and record how far performance degrades.

The adversary maximizes ``sum c(x, u) - gamma g(v)`` through the
closed-loop dynamics; this is run as the single-player solver minimizing
the negated objective over the ``v`` channel.
"""

from __future__ import annotations

import logging
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import ilqg
from .costs import StageQuadratic
from .dynamics import Dynamics, LocalDynamics
from .exceptions import DivergedRollout, HorizonMismatch, NoProgress
from .idg import filtered_noise
from .trajectory import SolverOptions, rollout

logger = logging.getLogger(__name__)


@dataclass
class FrozenPolicy:
    """Feedback law ``u_t = us[t] + k[t] + K[t] (x - xs[t])``."""

    xs: np.ndarray
    us: np.ndarray
    k: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.us = np.asarray(self.us, dtype=float)
        self.k = np.asarray(self.k, dtype=float)
        self.K = np.asarray(self.K, dtype=float)
        T = len(self.us)
        if len(self.xs) < T or self.k.shape != self.us.shape or self.K.shape[0] != T:
            raise HorizonMismatch("policy arrays disagree on the horizon")
        for a in (self.xs, self.us, self.k, self.K):
            if not np.all(np.isfinite(a)):
                raise ValueError("policy contains non-finite entries")

    @property
    def horizon(self):
        return len(self.us)

    @classmethod
    def from_solve(cls, traj, gains):
        """Freeze a converged solve: the open-loop term is already in ``traj.us``."""
        return cls(traj.xs, traj.us, np.zeros_like(traj.us), gains.G_u)

    def control(self, x, t):
        return self.us[t] + self.k[t] + self.K[t] @ (np.asarray(x, dtype=float) - self.xs[t])


class ClosedLoop(Dynamics):
    """The model with the control channel bound to a frozen policy.

    The disturbance becomes the only input, so the closed loop exposes it as
    the control (``m = model.p``) with no disturbance channel of its own.
    """

    def __init__(self, model, policy, horizon=None):
        T = policy.horizon if horizon is None else int(horizon)
        if policy.horizon < T:
            raise HorizonMismatch(f"policy covers {policy.horizon} steps, evaluation needs {T}")
        self.model = model
        self.policy = policy
        self.horizon = T
        self.n, self.m, self.p = model.n, model.p, 0

    def _check_t(self, t):
        if not 0 <= t < self.horizon:
            raise HorizonMismatch(f"step {t} outside the policy horizon {self.horizon}")

    def step(self, x, v, _unused=None, t=0):
        self._check_t(t)
        return self.model.step(x, self.policy.control(x, t), v, t)

    def linearize(self, x, v, _unused=None, t=0, second_order=False):
        # chain rule through u = pi_t(x); the policy is affine so only first
        # order terms compose exactly
        self._check_t(t)
        u = self.policy.control(x, t)
        inner = self.model.linearize(x, u, v, t)
        K = self.policy.K[t]
        return LocalDynamics(inner.f_x + inner.f_u @ K, inner.f_v, np.zeros((self.n, 0)))


class AdversaryObjective:
    """Negated adversarial objective ``-(c(x, pi(x)) - gamma g(v))`` over
    the closed loop, in the cost interface the solvers consume.

    ``cost`` supplies ``nominal`` (the running cost ``c``), ``penalty(v)``
    (the effort ``g``) and the terminal cost.
    """

    def __init__(self, cost, policy, gamma):
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        self.base = cost.nominal
        self.penalty_of = cost.penalty
        self.policy = policy
        self.gamma = float(gamma)

    def _u(self, x, t):
        return self.policy.control(x, t)

    def stage(self, x, v, _unused=None, t=0):
        u = self._u(x, t)
        c = self.base.stage(x, u, np.zeros(0), t)
        return -c + self.gamma * self.penalty_of(v)[0]

    def stage_quadratic(self, x, v, _unused=None, t=0):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        u = self._u(x, t)
        K = self.policy.K[t]
        c = self.base.stage_quadratic(x, u, np.zeros(0), t)
        g, g_v, g_vv = self.penalty_of(v)
        n, p = len(x), len(v)
        q = StageQuadratic.zeros(n, p, 0)
        q.l = -c.l + self.gamma * g
        q.l_x = -(c.l_x + K.T @ c.l_u)
        cross = K.T @ c.l_ux
        q.l_xx = -(c.l_xx + cross + cross.T + K.T @ c.l_uu @ K)
        q.l_u = self.gamma * g_v
        q.l_uu = self.gamma * g_vv
        q.l_ux = np.zeros((p, n))
        return q

    def terminal(self, x):
        return -self.base.terminal(x)

    def terminal_quadratic(self, x):
        L, L_x, L_xx = self.base.terminal_quadratic(x)
        return -L, -np.asarray(L_x), -np.asarray(L_xx)


def close_loop(model, policy, horizon=None):
    return ClosedLoop(model, policy, horizon)


@dataclass
class AdversaryResult:
    vs: np.ndarray
    xs: np.ndarray
    value: float
    iterations: int
    restart: int
    report: object = None


def optimize_adversary(closed, cost, gamma, x0, options=None, restarts=3, seed=0, v_init=None):
    """Best adversary found over ``restarts`` starts for one ``gamma``.

    The first start is ``v_init`` (zero if omitted); the others are smoothed
    Gaussian noise drawn from ``seed``. Returns an :class:`AdversaryResult`
    whose ``value`` is the adversarial objective ``J*_gamma`` (a lower bound
    on the true worst case). Raises :class:`NoProgress` only when every
    start fails to make progress.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    options = options or SolverOptions()
    objective = AdversaryObjective(cost, closed.policy, gamma)
    T, p = closed.horizon, closed.m
    rng = np.random.default_rng(seed)
    best, last_error = None, None
    for r in range(max(1, restarts)):
        if r == 0:
            v0 = np.zeros((T, p)) if v_init is None else np.asarray(v_init, dtype=float)
        else:
            v0 = filtered_noise(T, p, rng, options.noise_variance, options.filter_width)
        try:
            traj, _, report = ilqg.solve(closed, objective, x0, v0, options)
        except NoProgress as exc:
            traj, _, report = exc.result
            last_error = exc
            if report.iterations == 0:
                continue
        except DivergedRollout as exc:
            last_error = exc
            continue
        cand = AdversaryResult(traj.us, traj.xs, -traj.cost, report.iterations, r, report)
        if best is None or cand.value > best.value:
            best = cand
    if best is None:
        if isinstance(last_error, DivergedRollout):
            raise last_error
        raise NoProgress(f"adversary made no progress at gamma={gamma:g}")
    return best


@dataclass(frozen=True)
class TerminalDistance:
    """Degradation metric: distance of the final state to ``goal`` on ``dims``
    (all coordinates when ``dims`` is None)."""

    goal: Optional[tuple] = None
    dims: Optional[tuple] = (0, 1)

    def __call__(self, xs):
        x = np.asarray(xs)[-1]
        idx = list(range(len(x))) if self.dims is None else list(self.dims)
        g = np.zeros(len(x)) if self.goal is None else np.resize(np.asarray(self.goal, dtype=float), len(x))
        return float(np.linalg.norm(x[idx] - g[idx]))


def terminal_distance(goal=None, dims=(0, 1)):
    return TerminalDistance(None if goal is None else tuple(np.ravel(goal)), None if dims is None else tuple(dims))


@dataclass
class CurvePoint:
    gamma: float
    adversary_cost: float
    degradation: float
    iterations: int
    annotation: Optional[str] = None


@dataclass
class RobustnessCurve:
    points: list
    threshold: float
    gamma_star: Optional[float] = None
    undisturbed_degradation: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def gammas(self):
        return np.array([p.gamma for p in self.points])

    @property
    def values(self):
        return np.array([p.adversary_cost for p in self.points])

    @property
    def degradations(self):
        return np.array([p.degradation for p in self.points])

    def rows(self):
        return [(p.gamma, p.adversary_cost, p.degradation, p.iterations) for p in self.points]

    def to_dict(self):
        return {
            "threshold": self.threshold,
            "gamma_star": self.gamma_star,
            "undisturbed_degradation": self.undisturbed_degradation,
            "points": [
                {
                    "gamma": p.gamma,
                    "adversary_cost": p.adversary_cost,
                    "degradation": p.degradation,
                    "iterations": p.iterations,
                    "annotation": p.annotation,
                }
                for p in self.points
            ],
            **self.meta,
        }


def gamma_seed(seed, gamma):
    """Per-gamma seed that depends on the value, not on its grid position."""
    bits = struct.unpack("<Q", struct.pack("<d", float(gamma)))[0]
    return np.random.SeedSequence([int(seed), bits & 0xFFFFFFFF, bits >> 32])


def _one_gamma(args):
    model, policy, cost, gamma, x0, options, restarts, seed, metric, horizon = args
    closed = close_loop(model, policy, horizon)
    ss = gamma_seed(seed, gamma)
    try:
        res = optimize_adversary(closed, cost, gamma, x0, options, restarts, seed=ss)
    except DivergedRollout as exc:
        return CurvePoint(gamma, float("inf"), float("inf"), 0, f"diverged: {exc}")
    except (NoProgress, ValueError, np.linalg.LinAlgError) as exc:
        return CurvePoint(gamma, float("nan"), float("nan"), 0, f"{type(exc).__name__}: {exc}")
    note = None
    if res.report is not None and not res.report.converged:
        note = res.report.reason
    return CurvePoint(gamma, res.value, metric(res.xs), res.iterations, note)


def sweep(model, policy, cost, gammas, x0, options=None, restarts=3, seed=0, threshold=0.1, metric=None, workers=None, horizon=None):
    """Run one adversary optimization per gamma and assemble the curve.

    ``gamma_star`` is the largest gamma whose degradation exceeds
    ``threshold`` (None if every point is acceptable). Failures are recorded
    as annotations on their point; the sweep itself never aborts.
    """
    gammas = [float(g) for g in gammas]
    if not gammas or any(not g > 0 for g in gammas):
        raise ValueError("gamma grid must be nonempty and strictly positive")
    if len(set(gammas)) != len(gammas):
        raise ValueError("gamma grid has repeated values")
    if metric is None:
        goal = getattr(getattr(cost, "params", None), "x_star", None)
        metric = terminal_distance(goal)
    x0 = np.asarray(x0, dtype=float)
    ordered = sorted(gammas)
    jobs = [(model, policy, cost, g, x0, options, restarts, seed, metric, horizon) for g in ordered]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_one_gamma, jobs))
    else:
        points = [_one_gamma(job) for job in jobs]

    closed = close_loop(model, policy, horizon)
    undisturbed = rollout(closed, AdversaryObjective(cost, policy, 1.0), x0, np.zeros((closed.horizon, closed.m)))
    bad = [p.gamma for p in points if not math.isnan(p.degradation) and p.degradation > threshold]
    curve = RobustnessCurve(points, float(threshold), max(bad) if bad else None, metric(undisturbed.xs))
    for p in points:
        logger.info("gamma=%g J*=%.6g degradation=%.4g iters=%d %s", p.gamma, p.adversary_cost, p.degradation, p.iterations, p.annotation or "")
    return curve


__all__ = [
    "AdversaryObjective",
    "AdversaryResult",
    "ClosedLoop",
    "CurvePoint",
    "FrozenPolicy",
    "RobustnessCurve",
    "TerminalDistance",
    "close_loop",
    "gamma_seed",
    "optimize_adversary",
    "sweep",
    "terminal_distance",
]
