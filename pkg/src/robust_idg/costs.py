"""Stage and terminal costs with analytic first and second derivatives.

Every cost model exposes the same small surface used by the optimizers:

* ``stage(x, u, v, t)`` and ``stage_quadratic(x, u, v, t)``
* ``terminal(x)`` and ``terminal_quadratic(x)``
* ``gamma``, ``nominal`` (the same cost without the adversary term) and
  ``penalty(v)`` returning ``(g, g_v, g_vv)`` for the adversary's effort.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np


@dataclass
class StageQuadratic:
    """Second-order expansion of a stage cost around ``(x, u, v)``."""

    l: float
    l_x: np.ndarray
    l_u: np.ndarray
    l_v: np.ndarray
    l_xx: np.ndarray
    l_ux: np.ndarray
    l_vx: np.ndarray
    l_uu: np.ndarray
    l_vv: np.ndarray
    l_uv: np.ndarray

    @classmethod
    def zeros(cls, n, m, p):
        return cls(
            0.0,
            np.zeros(n),
            np.zeros(m),
            np.zeros(p),
            np.zeros((n, n)),
            np.zeros((m, n)),
            np.zeros((p, n)),
            np.zeros((m, m)),
            np.zeros((p, p)),
            np.zeros((m, p)),
        )


def _sym(a):
    return 0.5 * (a + a.T)


def _quiet_overflow(fn):
    # cosh of a large argument is inf; callers treat a non-finite cost as a
    # diverged rollout, so the numpy warning is noise
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        with np.errstate(over="ignore", invalid="ignore"):
            return fn(*args, **kwargs)

    return wrapper


@dataclass(frozen=True)
class CostParams:
    """Weights of the goal-reaching cost.

    ``w_x`` may be shorter than the state; missing entries get weight 0
    (the platform cost penalizes only the pose). ``x_star`` is padded the
    same way. ``terminal_weight`` multiplies the state cost at the horizon.
    """

    alpha_state: float = 1e-4
    w_x: tuple = (1.0, 1.0, 0.8)
    w_u: tuple = (1.0, 1.0, 1.0, 1.0)
    w_v: tuple = (1.0, 1.0, 1.0, 1.0)
    alpha_ctrl: float = 1e-4
    gamma: float = 1.0
    x_star: tuple = (0.0, 0.0, 0.0)
    terminal_weight: float = 10.0

    def __post_init__(self):
        if not self.alpha_state > 0:
            raise ValueError("alpha_state must be positive")
        if any(w < 0 for w in self.w_x) or any(w < 0 for w in self.w_u) or any(w < 0 for w in self.w_v):
            raise ValueError("penalty weights must be nonnegative")
        if self.terminal_weight < 0:
            raise ValueError("terminal_weight must be nonnegative")
        for name in ("w_x", "w_u", "w_v", "x_star"):
            object.__setattr__(self, name, tuple(float(w) for w in getattr(self, name)))

    def padded(self, n):
        """State weights and goal padded with zeros to length ``n``."""
        w = np.zeros(n)
        w[: len(self.w_x)] = self.w_x
        goal = np.zeros(n)
        goal[: len(self.x_star)] = self.x_star
        return w, goal


def smooth_abs_state_cost(x, params):
    """``sqrt(alpha + (x - x*)^T diag(w_x) (x - x*))`` with gradient and Hessian."""
    x = np.asarray(x, dtype=float)
    w, goal = params.padded(len(x))
    d = x - goal
    wd = w * d
    s = np.sqrt(params.alpha_state + d @ wd)
    l_x = wd / s
    l_xx = np.diag(w) / s - np.outer(wd, wd) / s**3
    return s, l_x, _sym(l_xx)


@_quiet_overflow
def cosh_control_cost(u, params, weights=None):
    """``alpha^2 (cosh(w^T u) - 1)``; the Hessian is rank one."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(params.w_u if weights is None else weights, dtype=float)
    a2 = params.alpha_ctrl**2
    s = w @ u
    return a2 * (np.cosh(s) - 1.0), a2 * np.sinh(s) * w, a2 * np.cosh(s) * np.outer(w, w)


def terminal_cost(x, params):
    """Terminal cost: ``terminal_weight`` times the smooth-abs state cost."""
    l, l_x, l_xx = smooth_abs_state_cost(x, params)
    k = params.terminal_weight
    return k * l, k * l_x, k * l_xx


@_quiet_overflow
def adversarial_stage_cost(x, u, v, params):
    """Smooth-abs state cost plus ``alpha^2 (cosh(w_u^T u) - gamma cosh(w_v^T v))``."""
    x, u, v = (np.asarray(a, dtype=float) for a in (x, u, v))
    n, m, p = len(x), len(u), len(v)
    ls, ls_x, ls_xx = smooth_abs_state_cost(x, params)
    a2 = params.alpha_ctrl**2
    wu = np.asarray(params.w_u, dtype=float)
    wv = np.asarray(params.w_v, dtype=float)
    su, sv = wu @ u, wv @ v
    g = params.gamma
    return StageQuadratic(
        l=ls + a2 * (np.cosh(su) - g * np.cosh(sv)),
        l_x=ls_x,
        l_u=a2 * np.sinh(su) * wu,
        l_v=-g * a2 * np.sinh(sv) * wv,
        l_xx=ls_xx,
        l_ux=np.zeros((m, n)),
        l_vx=np.zeros((p, n)),
        l_uu=a2 * np.cosh(su) * np.outer(wu, wu),
        l_vv=-g * a2 * np.cosh(sv) * np.outer(wv, wv),
        l_uv=np.zeros((m, p)),
    )


def _as_matrix(w, dim):
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        return float(w) * np.eye(dim)
    if w.ndim == 1:
        return np.diag(w)
    return _sym(w)


@dataclass(frozen=True)
class QuadraticGameParams:
    """Weights of ``u^T W_u u + (x - d*)^T W_x (x - d*) - gamma v^T v``.

    Weights may be scalars (times identity), vectors (diagonal) or
    matrices.
    """

    w_x: object = 1.0
    w_u: object = 1e-6
    gamma: float = 1.0
    d_star: Optional[tuple] = None
    w_terminal: object = None


def quadratic_game_cost(x, u, v, params):
    x, u, v = (np.asarray(a, dtype=float) for a in (x, u, v))
    n, m, p = len(x), len(u), len(v)
    Wx, Wu = _as_matrix(params.w_x, n), _as_matrix(params.w_u, m)
    d = x - (np.zeros(n) if params.d_star is None else np.asarray(params.d_star, dtype=float))
    g = params.gamma
    return StageQuadratic(
        l=u @ Wu @ u + d @ Wx @ d - g * (v @ v),
        l_x=2.0 * Wx @ d,
        l_u=2.0 * Wu @ u,
        l_v=-2.0 * g * v,
        l_xx=2.0 * Wx,
        l_ux=np.zeros((m, n)),
        l_vx=np.zeros((p, n)),
        l_uu=2.0 * Wu,
        l_vv=-2.0 * g * np.eye(p),
        l_uv=np.zeros((m, p)),
    )


class GoalCost:
    """Goal-reaching cost for the platform.

    ``adversary`` selects the disturbance penalty ``g(v)``:

    * ``None``: nominal cost, ``v`` is ignored;
    * ``"cosh"``: ``alpha^2 (cosh(w_u^T u) - gamma cosh(w_v^T v))`` control
      block, exactly :func:`adversarial_stage_cost`;
    * ``"quadratic"``: nominal cost minus ``gamma v^T v``.
    """

    def __init__(self, params=None, adversary=None):
        if adversary not in (None, "cosh", "quadratic"):
            raise ValueError(f"unknown adversary penalty {adversary!r}")
        self.params = params if params is not None else CostParams()
        self.adversary = adversary

    @property
    def gamma(self):
        return self.params.gamma

    def with_gamma(self, gamma):
        return GoalCost(replace(self.params, gamma=float(gamma)), self.adversary)

    @property
    def nominal(self):
        return GoalCost(self.params, None)

    @_quiet_overflow
    def penalty(self, v):
        v = np.asarray(v, dtype=float)
        if self.adversary == "cosh":
            a2 = self.params.alpha_ctrl**2
            w = np.asarray(self.params.w_v, dtype=float)
            s = w @ v
            return a2 * np.cosh(s), a2 * np.sinh(s) * w, a2 * np.cosh(s) * np.outer(w, w)
        return v @ v, 2.0 * v, 2.0 * np.eye(len(v))

    def stage_quadratic(self, x, u, v, t=0):
        if self.adversary == "cosh":
            return adversarial_stage_cost(x, u, v, self.params)
        x, u, v = (np.asarray(a, dtype=float) for a in (x, u, v))
        n, m, p = len(x), len(u), len(v)
        q = StageQuadratic.zeros(n, m, p)
        ls, q.l_x, q.l_xx = smooth_abs_state_cost(x, self.params)
        lu, q.l_u, q.l_uu = cosh_control_cost(u, self.params)
        q.l = ls + lu
        if self.adversary == "quadratic":
            g, g_v, g_vv = self.penalty(v)
            q.l -= self.gamma * g
            q.l_v = -self.gamma * g_v
            q.l_vv = -self.gamma * g_vv
        return q

    @_quiet_overflow
    def stage(self, x, u, v, t=0):
        # scalar path without building derivative blocks
        ls = smooth_abs_state_cost(x, self.params)[0]
        if self.adversary == "cosh":
            a2 = self.params.alpha_ctrl**2
            su = np.asarray(self.params.w_u) @ u
            sv = np.asarray(self.params.w_v) @ v
            return ls + a2 * (np.cosh(su) - self.gamma * np.cosh(sv))
        val = ls + cosh_control_cost(u, self.params)[0]
        if self.adversary == "quadratic":
            val -= self.gamma * float(np.dot(v, v))
        return val

    def terminal(self, x):
        return terminal_cost(x, self.params)[0]

    def terminal_quadratic(self, x):
        return terminal_cost(x, self.params)


class QuadraticCost:
    """``u^T W_u u + (x - d*)^T W_x (x - d*) - gamma v^T v`` with a
    quadratic terminal cost ``(x - d*)^T W_T (x - d*)``.
    """

    def __init__(self, params=None):
        self.params = params if params is not None else QuadraticGameParams()

    @property
    def gamma(self):
        return self.params.gamma

    def with_gamma(self, gamma):
        return QuadraticCost(replace(self.params, gamma=float(gamma)))

    @property
    def nominal(self):
        return QuadraticCost(replace(self.params, gamma=0.0))

    def penalty(self, v):
        v = np.asarray(v, dtype=float)
        return v @ v, 2.0 * v, 2.0 * np.eye(len(v))

    def stage_quadratic(self, x, u, v, t=0):
        return quadratic_game_cost(x, u, v, self.params)

    def stage(self, x, u, v, t=0):
        return quadratic_game_cost(x, u, v, self.params).l

    def _terminal_parts(self, x):
        x = np.asarray(x, dtype=float)
        n = len(x)
        W = np.zeros((n, n)) if self.params.w_terminal is None else _as_matrix(self.params.w_terminal, n)
        d = x - (np.zeros(n) if self.params.d_star is None else np.asarray(self.params.d_star, dtype=float))
        return d, W

    def terminal(self, x):
        d, W = self._terminal_parts(x)
        return float(d @ W @ d)

    def terminal_quadratic(self, x):
        d, W = self._terminal_parts(x)
        return float(d @ W @ d), 2.0 * W @ d, 2.0 * W
