"""Exact reference solutions for linear-quadratic problems.

Conventions: stage cost ``x^T Q x + u^T R u - gamma v^T v``, terminal cost
``x^T Q_T x``, dynamics ``x' = A x + B u + D v`` and value ``x^T P_t x``.
Gains are returned in the form ``u = K x`` (no minus sign folded in).

These solvers are deliberately written from the per-stage stationarity
conditions and share no code with the iterative solvers they check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import BoundaryHit, ConcavityViolated


def _at(M, t):
    M = np.asarray(M, dtype=float)
    return M[t] if M.ndim == 3 else M


@dataclass
class LQGameSpec:
    """Finite-horizon zero-sum LQ game. ``A``, ``B``, ``D`` and ``W_x`` may be
    stacked per step with a leading axis of length ``T``."""

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    W_x: np.ndarray
    W_u: np.ndarray
    gamma: float
    W_T: np.ndarray
    T: int

    @property
    def n(self):
        return np.asarray(self.B).shape[-2]

    @property
    def m(self):
        return np.asarray(self.B).shape[-1]

    @property
    def p(self):
        D = np.asarray(self.D)
        return 0 if D.size == 0 else D.shape[-1]


def lqr_riccati(spec):
    """Textbook backward Riccati recursion for the disturbance-free problem.

    Returns ``(K, P)`` with ``K`` of shape (T, m, n) and ``P`` (T+1, n, n).
    """
    T, n, m = spec.T, spec.n, spec.m
    R = np.asarray(spec.W_u, dtype=float)
    P = np.empty((T + 1, n, n))
    K = np.empty((T, m, n))
    P[T] = np.asarray(spec.W_T, dtype=float)
    for t in range(T - 1, -1, -1):
        A, B, Q = _at(spec.A, t), _at(spec.B, t), _at(spec.W_x, t)
        Pn = P[t + 1]
        K[t] = -np.linalg.solve(R + B.T @ Pn @ B, B.T @ Pn @ A)
        Acl = A + B @ K[t]
        Pt = Q + K[t].T @ R @ K[t] + Acl.T @ Pn @ Acl
        P[t] = 0.5 * (Pt + Pt.T)
    return K, P


def lq_game_recursion(spec):
    """Saddle-point recursion of the zero-sum LQ game.

    Each stage solves the joint stationarity system

    ``[[R + B'PB, B'PD], [D'PB, D'PD - gamma I]] [K_u; K_v] = -[B'PA; D'PA]``

    and propagates ``P``. Returns ``(K_u, K_v, P)``. Raises
    :class:`ConcavityViolated` if ``gamma I - D'PD`` is not positive definite.
    """
    T, n, m, p = spec.T, spec.n, spec.m, spec.p
    R = np.asarray(spec.W_u, dtype=float)
    g = float(spec.gamma)
    P = np.empty((T + 1, n, n))
    Ku = np.empty((T, m, n))
    Kv = np.empty((T, p, n))
    P[T] = np.asarray(spec.W_T, dtype=float)
    for t in range(T - 1, -1, -1):
        A, B, Q = _at(spec.A, t), _at(spec.B, t), _at(spec.W_x, t)
        D = _at(spec.D, t).reshape(n, p)
        Pn = P[t + 1]
        if p and np.any(np.linalg.eigvalsh(g * np.eye(p) - D.T @ Pn @ D) <= 0):
            raise ConcavityViolated(t)
        H = np.block(
            [
                [R + B.T @ Pn @ B, B.T @ Pn @ D],
                [D.T @ Pn @ B, D.T @ Pn @ D - g * np.eye(p)],
            ]
        )
        rhs = -np.vstack([B.T @ Pn @ A, D.T @ Pn @ A])
        K = np.linalg.solve(H, rhs)
        Ku[t], Kv[t] = K[:m], K[m:]
        Acl = A + B @ Ku[t] + D @ Kv[t]
        Pt = Q + Ku[t].T @ R @ Ku[t] - g * Kv[t].T @ Kv[t] + Acl.T @ Pn @ Acl
        P[t] = 0.5 * (Pt + Pt.T)
    return Ku, Kv, P


def closed_loop_adversary(spec, K):
    """Adversary's best response against the frozen linear law ``u = K_t x``.

    The adversary maximizes ``sum x'(Q + K'RK)x - gamma v'v + x_T' Q_T x_T``
    subject to ``x' = (A + B K_t) x + D v``. Returns ``(K_v, P)`` where the
    optimal objective from ``x0`` is ``x0' P_0 x0``.
    """
    T, n, p = spec.T, spec.n, spec.p
    R = np.asarray(spec.W_u, dtype=float)
    g = float(spec.gamma)
    P = np.empty((T + 1, n, n))
    Kv = np.empty((T, p, n))
    P[T] = np.asarray(spec.W_T, dtype=float)
    for t in range(T - 1, -1, -1):
        A, B, Q = _at(spec.A, t), _at(spec.B, t), _at(spec.W_x, t)
        D = _at(spec.D, t).reshape(n, p)
        Acl = A + B @ K[t]
        Pn = P[t + 1]
        curvature = g * np.eye(p) - D.T @ Pn @ D
        if np.any(np.linalg.eigvalsh(curvature) <= 0):
            raise ConcavityViolated(t)
        Kv[t] = np.linalg.solve(curvature, D.T @ Pn @ Acl)
        Af = Acl + D @ Kv[t]
        Pt = Q + K[t].T @ R @ K[t] - g * Kv[t].T @ Kv[t] + Af.T @ Pn @ Af
        P[t] = 0.5 * (Pt + Pt.T)
    return Kv, P


def scalar_saddle_grid(f, bounds, resolution=2001, refinements=2):
    """Brute-force ``argmin_u max_v f(u, v)`` on a lattice.

    ``f`` must accept broadcast arrays. ``bounds = ((u_lo, u_hi), (v_lo, v_hi))``.
    After the first pass the lattice is rebuilt ``refinements`` times
    around the incumbent. Returns ``(u*, v*, (du, dv))`` with the final
    lattice spacings. Raises :class:`BoundaryHit` if the optimum sits on
    the outer boundary.
    """
    (ulo, uhi), (vlo, vhi) = bounds
    for level in range(refinements + 1):
        us = np.linspace(ulo, uhi, resolution)
        vs = np.linspace(vlo, vhi, resolution)
        F = f(us[:, None], vs[None, :])
        inner = F.max(axis=1)
        i = int(np.argmin(inner))
        j = int(np.argmax(F[i]))
        if level == 0 and (i in (0, resolution - 1) or j in (0, resolution - 1)):
            raise BoundaryHit(f"saddle on search boundary at u={us[i]:.6g}, v={vs[j]:.6g}")
        du, dv = us[1] - us[0], vs[1] - vs[0]
        ulo, uhi = us[i] - 4 * du, us[i] + 4 * du
        vlo, vhi = vs[j] - 4 * dv, vs[j] + 4 * dv
    return us[i], vs[j], (du, dv)
