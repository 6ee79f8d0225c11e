"""Minimax iterative dynamic game (iDG).

The protagonist ``u`` minimizes and the adversary ``v`` maximizes the same
cost. Each backward step expands ``l + V'`` to second order, solves the
coupled stationarity conditions of both players jointly, and propagates
the quadratic value model. The single-player optimizer in
:mod:`robust_idg.ilqg` runs the same machinery with the adversary channel
removed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DivergedRollout, FailureAtStep, SaddleIllConditioned
from .trajectory import (
    BackwardResult,
    GainSchedule,
    SolverOptions,
    Trajectory,
    optimize,
    price,
    rollout,
)


@dataclass
class QExpansion:
    Q_x: np.ndarray
    Q_u: np.ndarray
    Q_v: np.ndarray
    Q_xx: np.ndarray
    Q_ux: np.ndarray
    Q_vx: np.ndarray
    Q_uu: np.ndarray
    Q_vv: np.ndarray
    Q_uv: np.ndarray


@dataclass
class ValueExpansion:
    dV: float
    V_x: np.ndarray
    V_xx: np.ndarray


@dataclass
class StepGains:
    g_u: np.ndarray
    G_u: np.ndarray
    g_v: np.ndarray
    G_v: np.ndarray
    K_u: np.ndarray
    K_v: np.ndarray


def _sym(a):
    return 0.5 * (a + a.T)


def _contract(V_x, tensor):
    return np.tensordot(V_x, tensor, axes=(0, 0))


def q_expansion(dyn, stage, next_value, second_order=False):
    """Second-order expansion of ``l(x, u, v) + V'(f(x, u, v))``."""
    fx, fu, fv = dyn.f_x, dyn.f_u, dyn.f_v
    Vx, Vxx = next_value.V_x, next_value.V_xx
    q = QExpansion(
        Q_x=stage.l_x + fx.T @ Vx,
        Q_u=stage.l_u + fu.T @ Vx,
        Q_v=stage.l_v + fv.T @ Vx,
        Q_xx=stage.l_xx + fx.T @ Vxx @ fx,
        Q_ux=stage.l_ux + fu.T @ Vxx @ fx,
        Q_vx=stage.l_vx + fv.T @ Vxx @ fx,
        Q_uu=stage.l_uu + fu.T @ Vxx @ fu,
        Q_vv=stage.l_vv + fv.T @ Vxx @ fv,
        Q_uv=stage.l_uv + fu.T @ Vxx @ fv,
    )
    if second_order and dyn.has_second_order:
        q.Q_xx = q.Q_xx + _contract(Vx, dyn.f_xx)
        q.Q_ux = q.Q_ux + _contract(Vx, dyn.f_ux)
        q.Q_vx = q.Q_vx + _contract(Vx, dyn.f_vx)
        q.Q_uu = q.Q_uu + _contract(Vx, dyn.f_uu)
        q.Q_vv = q.Q_vv + _contract(Vx, dyn.f_vv)
        q.Q_uv = q.Q_uv + _contract(Vx, dyn.f_uv)
    q.Q_xx, q.Q_uu, q.Q_vv = _sym(q.Q_xx), _sym(q.Q_uu), _sym(q.Q_vv)
    return q


def improved_q_blocks(dyn, stage, next_value, rho, mode="control", second_order=False):
    """Regularized copy of the Q-expansion used only to compute gains.

    ``mode="control"`` adds ``rho I`` to ``Q_uu`` and subtracts it from
    ``Q_vv``. ``mode="state"`` replaces ``V_xx'`` by ``V_xx' + rho I`` in the
    own-channel blocks, i.e. adds ``rho f_u^T f_u`` / ``rho f_u^T f_x`` to
    ``Q_uu`` / ``Q_ux`` and subtracts ``rho f_v^T f_v`` / ``rho f_v^T f_x``
    from ``Q_vv`` / ``Q_vx``. ``"both"`` applies both. ``Q_uv`` is never
    regularized.
    """
    q = q_expansion(dyn, stage, next_value, second_order)
    if rho == 0:
        return q
    m, p = len(q.Q_u), len(q.Q_v)
    if mode in ("state", "both"):
        fx, fu, fv = dyn.f_x, dyn.f_u, dyn.f_v
        q.Q_uu = q.Q_uu + rho * (fu.T @ fu)
        q.Q_ux = q.Q_ux + rho * (fu.T @ fx)
        q.Q_vv = q.Q_vv - rho * (fv.T @ fv)
        q.Q_vx = q.Q_vx - rho * (fv.T @ fx)
    if mode in ("control", "both"):
        q.Q_uu = q.Q_uu + rho * np.eye(m)
        q.Q_vv = q.Q_vv - rho * np.eye(p)
    elif mode != "state":
        raise ValueError(f"unknown regularization mode {mode!r}")
    return q


def _is_pd(a, cond_limit=1e12):
    """Cholesky succeeds and the matrix is not numerically singular."""
    try:
        L = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return False
    d = np.abs(np.diag(L))
    return bool(d.size == 0 or (d.min() > 0 and (d.max() / d.min()) ** 2 < cond_limit))


def _clamp_pd(a, floor):
    w, V = np.linalg.eigh(a)
    return (V * np.maximum(w, floor)) @ V.T


def saddle_gains(q, t=0, eig_clamp_floor=None, cond_limit=1e12):
    """Open-loop and feedback gains of both players at one step.

    Solves ``Q_u + Q_uu g_u + Q_uv g_v = 0`` and
    ``Q_v + Q_uv^T g_u + Q_vv g_v = 0`` (and the feedback analogues) through

    ``K_u = [(I - Q_uu^-1 Q_uv Q_vv^-1 Q_uv^T)]^-1 Q_uu^-1``
    ``g_u = K_u (Q_uv Q_vv^-1 Q_v - Q_u)``
    ``G_u = K_u (Q_uv Q_vv^-1 Q_vx - Q_ux)``

    and symmetrically for ``v``. Requires ``Q_uu`` positive definite and
    ``Q_vv`` negative definite; with no adversary channel this is the usual
    ``g_u = -Q_uu^-1 Q_u``. ``eig_clamp_floor`` replaces the failure on an
    indefinite ``Q_uu`` by clamping its eigenvalues from below.
    """
    m, p = len(q.Q_u), len(q.Q_v)
    Quu = q.Q_uu
    if not _is_pd(Quu, cond_limit):
        if eig_clamp_floor is None:
            raise FailureAtStep(t, f"Q_uu not positive definite at step {t}")
        Quu = _clamp_pd(Quu, eig_clamp_floor)
    if p == 0:
        K_u = np.linalg.inv(Quu)
        return StepGains(
            g_u=-K_u @ q.Q_u,
            G_u=-K_u @ q.Q_ux,
            g_v=np.zeros(0),
            G_v=np.zeros((0, len(q.Q_x))),
            K_u=K_u,
            K_v=np.zeros((0, 0)),
        )
    Qvv = q.Q_vv
    if not _is_pd(-Qvv, cond_limit):
        raise FailureAtStep(t, f"Q_vv not negative definite at step {t}")
    Quv = q.Q_uv
    Quu_inv = np.linalg.inv(Quu)
    Qvv_inv = np.linalg.inv(Qvv)
    contraction_u = np.eye(m) - Quu_inv @ Quv @ Qvv_inv @ Quv.T
    contraction_v = np.eye(p) - Qvv_inv @ Quv.T @ Quu_inv @ Quv
    if np.linalg.cond(contraction_u) > cond_limit or np.linalg.cond(contraction_v) > cond_limit:
        raise SaddleIllConditioned(t, f"coupling contraction singular at step {t}")
    K_u = np.linalg.solve(contraction_u, Quu_inv)
    K_v = np.linalg.solve(contraction_v, Qvv_inv)
    return StepGains(
        g_u=K_u @ (Quv @ Qvv_inv @ q.Q_v - q.Q_u),
        G_u=K_u @ (Quv @ Qvv_inv @ q.Q_vx - q.Q_ux),
        g_v=K_v @ (Quv.T @ Quu_inv @ q.Q_u - q.Q_v),
        G_v=K_v @ (Quv.T @ Quu_inv @ q.Q_ux - q.Q_vx),
        K_u=K_u,
        K_v=K_v,
    )


def value_recursion(q, gains):
    """Quadratic value model at the current step given both players' laws.

    Substitutes ``du = g_u + G_u dx`` and ``dv = g_v + G_v dx`` into the
    Q-expansion and collects the constant, linear and quadratic terms.
    """
    gu, Gu, gv, Gv = gains.g_u, gains.G_u, gains.g_v, gains.G_v
    dV = (
        gu @ q.Q_u
        + gv @ q.Q_v
        + gu @ q.Q_uv @ gv
        + 0.5 * (gu @ q.Q_uu @ gu + gv @ q.Q_vv @ gv)
    )
    V_x = (
        q.Q_x
        + Gu.T @ q.Q_u
        + Gv.T @ q.Q_v
        + Gu.T @ q.Q_uu @ gu
        + q.Q_ux.T @ gu
        + q.Q_vx.T @ gv
        + Gv.T @ q.Q_vv @ gv
        + Gv.T @ q.Q_uv.T @ gu
        + Gu.T @ q.Q_uv @ gv
    )
    cross_u = Gu.T @ q.Q_ux
    cross_v = Gv.T @ q.Q_vx
    cross_uv = Gu.T @ q.Q_uv @ Gv
    V_xx = (
        q.Q_xx
        + Gu.T @ q.Q_uu @ Gu
        + Gv.T @ q.Q_vv @ Gv
        + cross_u
        + cross_u.T
        + cross_v
        + cross_v.T
        + cross_uv
        + cross_uv.T
    )
    return ValueExpansion(float(dV), V_x, _sym(V_xx))


def _drop_adversary(dyn, stage):
    n = dyn.f_x.shape[0]
    m = dyn.f_u.shape[1]
    dyn = replace(
        dyn,
        f_v=np.zeros((n, 0)),
        f_vv=None if dyn.f_vv is None else np.zeros((n, 0, 0)),
        f_vx=None if dyn.f_vx is None else np.zeros((n, 0, n)),
        f_uv=None if dyn.f_uv is None else np.zeros((n, m, 0)),
    )
    stage = replace(
        stage,
        l_v=np.zeros(0),
        l_vx=np.zeros((0, n)),
        l_vv=np.zeros((0, 0)),
        l_uv=np.zeros((m, 0)),
    )
    return dyn, stage


def _backward(lm, reg, mode="control", second_order=False, eig_clamp=False, with_adversary=True):
    T = lm.horizon
    L, L_x, L_xx = lm.terminal
    value = ValueExpansion(0.0, np.asarray(L_x, dtype=float), _sym(np.asarray(L_xx, dtype=float)))
    n = len(value.V_x)
    m = lm.dynamics[0].f_u.shape[1] if T else 0
    p = lm.dynamics[0].f_v.shape[1] if (T and with_adversary) else 0
    gains = GainSchedule.zeros(T, n, m, p)
    values = [None] * (T + 1)
    values[T] = (value.V_x, value.V_xx)
    d1 = d2 = dc = dV = 0.0
    floor = max(reg.rho, 1e-12) if eig_clamp else None
    for t in range(T - 1, -1, -1):
        dyn, stage = lm.dynamics[t], lm.stages[t]
        if not with_adversary:
            dyn, stage = _drop_adversary(dyn, stage)
        q = q_expansion(dyn, stage, value, second_order)
        q_reg = improved_q_blocks(dyn, stage, value, reg.rho, mode, second_order)
        g = saddle_gains(q_reg, t, eig_clamp_floor=floor)
        value = value_recursion(q, g)
        if not (np.all(np.isfinite(value.V_x)) and np.all(np.isfinite(value.V_xx))):
            raise FailureAtStep(t, f"non-finite value expansion at step {t}")
        gains.g_u[t], gains.G_u[t], gains.K_u[t] = g.g_u, g.G_u, g.K_u
        gains.g_v[t], gains.G_v[t], gains.K_v[t] = g.g_v, g.G_v, g.K_v
        d1 += g.g_u @ q.Q_u + g.g_v @ q.Q_v
        d2 += g.g_u @ q.Q_uu @ g.g_u + g.g_v @ q.Q_vv @ g.g_v
        dc += g.g_u @ q.Q_uv @ g.g_v
        dV += value.dV
        values[t] = (value.V_x, value.V_xx)
    return BackwardResult(gains, float(d1), float(d2), float(dc), values, float(dV))


def idg_backward_pass(lm, reg, mode="control", second_order=False, eig_clamp=False):
    """Joint backward pass from t = T-1 down to 0.

    Raises :class:`FailureAtStep` when a regularized curvature block is
    ill-posed; the caller increases ``rho`` and retries.
    """
    return _backward(lm, reg, mode, second_order, eig_clamp, with_adversary=True)


def _forward(model, cost, traj, gains, step, update_v):
    T = traj.horizon
    xs = np.empty_like(traj.xs)
    us = np.empty_like(traj.us)
    vs = traj.vs.copy()
    xs[0] = traj.xs[0]
    for t in range(T):
        dx = xs[t] - traj.xs[t]
        us[t] = traj.us[t] + step * gains.g_u[t] + gains.G_u[t] @ dx
        if update_v:
            vs[t] = traj.vs[t] + step * gains.g_v[t] + gains.G_v[t] @ dx
        xs[t + 1] = model.step(xs[t], us[t], vs[t], t)
        if not np.all(np.isfinite(xs[t + 1])):
            raise DivergedRollout(t)
    return price(cost, xs, us, vs)


def idg_forward_pass(model, cost, traj, gains, step):
    """Update both channels: ``u + step g_u + G_u dx`` and ``v + step g_v + G_v dx``."""
    if not 0 <= step <= 1:
        raise ValueError("line-search step must lie in [0, 1]")
    return _forward(model, cost, traj, gains, step, update_v=gains.g_v.shape[1] > 0)


def filtered_noise(T, p, rng, variance=2.0, width=5):
    """i.i.d. ``N(0, variance I)`` draws smoothed by a centred moving average."""
    raw = rng.normal(0.0, np.sqrt(variance), size=(T, p))
    if width <= 1 or T == 0 or p == 0:
        return raw
    half = width // 2
    padded = np.pad(raw, ((half, width - 1 - half), (0, 0)), mode="edge")
    kernel = np.ones(width) / width
    return np.stack([np.convolve(padded[:, j], kernel, mode="valid") for j in range(p)], axis=1)


def idg_solve(model, cost, x0, us_init, vs_init=None, options=None):
    """Run the minimax iterative dynamic game to a local saddle point.

    When ``vs_init`` is None the adversary starts from Gaussian noise
    ``N(0, 2I)`` smoothed along time, drawn from ``options.seed``.
    Returns ``(trajectory, gains, report)``.
    """
    options = options or SolverOptions()
    us_init = np.atleast_2d(np.asarray(us_init, dtype=float))
    T = len(us_init)
    rng = np.random.default_rng(options.seed)
    if vs_init is None:
        vs_init = filtered_noise(T, model.p, rng, options.noise_variance, options.filter_width)
    traj = rollout(model, cost, np.asarray(x0, dtype=float), us_init, vs_init)

    def backward(lm, reg):
        return idg_backward_pass(lm, reg, options.regularization, options.second_order, options.eig_clamp)

    def forward(tr, gains, step):
        return idg_forward_pass(model, cost, tr, gains, step)

    def redraw(tr, it):
        if it == 0:
            return tr
        vs = filtered_noise(T, model.p, rng, options.noise_variance, options.filter_width)
        return rollout(model, cost, tr.xs[0], tr.us, vs)

    return optimize(model, cost, traj, backward, forward, options, redraw if options.redraw else None)


__all__ = [
    "QExpansion",
    "ValueExpansion",
    "StepGains",
    "q_expansion",
    "improved_q_blocks",
    "saddle_gains",
    "value_recursion",
    "idg_backward_pass",
    "idg_forward_pass",
    "idg_solve",
    "filtered_noise",
    "Trajectory",
]
