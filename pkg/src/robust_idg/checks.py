"""Oracle suite: compare the iterative solvers' backward passes with the
closed-form LQ recursions on random linear instances.

Each check returns a :class:`CheckResult`; ``run_suite`` bundles them for
the ``oracle-check`` command.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from . import ilqg, oracle
from .costs import QuadraticCost, QuadraticGameParams
from .dynamics import LTISystem
from .exceptions import ConcavityViolated
from .idg import idg_backward_pass
from .trajectory import RegState, local_model, rollout


@dataclass
class CheckResult:
    name: str
    status: str
    max_error: float
    tolerance: float
    instances: int
    seconds: float

    def to_dict(self):
        return asdict(self)


@dataclass
class LQInstance:
    spec: oracle.LQGameSpec
    model: LTISystem
    cost: QuadraticCost


def controllable(A, B):
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.linalg.matrix_rank(np.hstack(blocks)) == n


def random_lq_instance(rng, n, m, p, T, gamma=None, max_radius=None):
    """Random controllable ``(A, B)`` with SPD weights.

    ``max_radius`` rescales ``A`` so its spectral radius does not exceed it.

    With ``p > 0`` and ``gamma=None`` the smallest doubling of gamma that
    keeps every stage strictly concave is found and then doubled again for
    margin.
    """
    while True:
        A = np.eye(n) + 0.3 * rng.standard_normal((n, n))
        B = rng.standard_normal((n, m))
        radius = float(np.max(np.abs(np.linalg.eigvals(A))))
        if max_radius is not None and radius > max_radius:
            A *= max_radius / radius
        if controllable(A, B):
            break
    D = 0.5 * rng.standard_normal((n, p))
    Lx = rng.standard_normal((n, n))
    Lu = rng.standard_normal((m, m))
    Wx = Lx @ Lx.T / n + 0.1 * np.eye(n)
    Wu = Lu @ Lu.T / m + 0.1 * np.eye(m)
    WT = 2.0 * np.eye(n)
    if gamma is None:
        gamma = 1.0
        if p:
            while True:
                try:
                    oracle.lq_game_recursion(oracle.LQGameSpec(A, B, D, Wx, Wu, gamma, WT, T))
                    break
                except ConcavityViolated:
                    gamma *= 2.0
            gamma *= 2.0
    spec = oracle.LQGameSpec(A, B, D, Wx, Wu, float(gamma), WT, T)
    cost = QuadraticCost(QuadraticGameParams(w_x=Wx, w_u=Wu, gamma=float(gamma), w_terminal=WT))
    return LQInstance(spec, LTISystem(A, B, D), cost)


def _local(inst, rng, adversary_input=True):
    """Local model around a rollout from a random start and random inputs
    (the disturbance is held at zero unless ``adversary_input``)."""
    spec = inst.spec
    x0 = rng.standard_normal(spec.n)
    us = rng.standard_normal((spec.T, spec.m))
    vs = rng.standard_normal((spec.T, spec.p)) if adversary_input else np.zeros((spec.T, spec.p))
    traj = rollout(inst.model, inst.cost, x0, us, vs)
    return local_model(inst.model, inst.cost, traj)


_NO_REG = RegState(rho=0.0, rho0=1.0)


def riccati_equivalence(count=20, seed=0, tol=1e-8):
    """Single-player feedback gains versus the textbook Riccati recursion
    (value matrices are compared relative to their largest entry)."""
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(count):
        n, m = int(rng.integers(1, 7)), int(rng.integers(1, 5))
        inst = random_lq_instance(rng, n, m, 0, int(rng.integers(5, 30)), max_radius=1.2)
        K, P = oracle.lqr_riccati(inst.spec)
        res = ilqg.backward_pass(_local(inst, rng), _NO_REG)
        err_p = max(float(np.max(np.abs(res.values[t][1] - 2.0 * P[t]))) for t in range(inst.spec.T + 1))
        scale = max(1.0, float(np.max(np.abs(P))))
        worst = max(worst, float(np.max(np.abs(res.gains.G_u - K))), err_p / scale)
    return _result("riccati_equivalence", worst, tol, count, start)


def game_equivalence(count=20, seed=1, tol=1e-8):
    """Saddle gains of both players and the value matrices versus the
    closed-form game recursion."""
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(count):
        n, m, p = int(rng.integers(1, 7)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
        inst = random_lq_instance(rng, n, m, p, int(rng.integers(5, 30)), max_radius=1.2)
        Ku, Kv, P = oracle.lq_game_recursion(inst.spec)
        res = idg_backward_pass(_local(inst, rng), _NO_REG)
        err_p = max(float(np.max(np.abs(res.values[t][1] - 2.0 * P[t]))) for t in range(inst.spec.T + 1))
        scale = max(1.0, float(np.max(np.abs(P))))
        worst = max(worst, float(np.max(np.abs(res.gains.G_u - Ku))), float(np.max(np.abs(res.gains.G_v - Kv))), err_p / scale)
    return _result("game_equivalence", worst, tol, count, start)


def lti_testbed(gamma=1.0, disturbance_scale=0.1, T=30, dt=0.1):
    """Planar double integrator ``[p, v]`` with the disturbance entering
    through the control channel scaled by ``disturbance_scale``.

    With the default scale the adversary's problem against the LQR policy
    stays concave for every gamma down to 1e-2.
    """
    I, Z = np.eye(2), np.zeros((2, 2))
    A = np.block([[I, dt * I], [Z, I]])
    B = np.vstack([0.5 * dt**2 * I, dt * I])
    D = disturbance_scale * B
    Wx, Wu, WT = np.eye(4), 0.1 * np.eye(2), 10.0 * np.eye(4)
    spec = oracle.LQGameSpec(A, B, D, Wx, Wu, float(gamma), WT, T)
    cost = QuadraticCost(QuadraticGameParams(w_x=Wx, w_u=Wu, gamma=float(gamma), w_terminal=WT))
    return LQInstance(spec, LTISystem(A, B, D), cost)


def gamma_limit(count=5, seed=2, gamma=1e8, tol=1e-6):
    """At very large gamma the game gains collapse onto the single-player
    ones and the adversary does nothing. Evaluated on the testbed around
    disturbance-free rollouts from ``count`` random starts."""
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    inst = lti_testbed(gamma)
    worst = 0.0
    for _ in range(count):
        lm = _local(inst, rng, adversary_input=False)
        game = idg_backward_pass(lm, _NO_REG).gains
        single = ilqg.backward_pass(lm, _NO_REG).gains
        worst = max(
            worst,
            float(np.max(np.abs(game.G_u - single.G_u))),
            float(np.max(np.abs(game.G_v))),
            float(np.max(np.abs(game.g_v))),
        )
    return _result("gamma_limit", worst, tol, count, start)


def scalar_saddle(tol=1e-6):
    """Grid saddle of ``u^2 + 2uv - 2v^2 + u - v`` against its closed form
    ``(u*, v*) = (-1/6, -1/3)``."""
    start = time.perf_counter()

    def f(u, v):
        return u**2 + 2 * u * v - 2 * v**2 + u - v

    u, v, _ = oracle.scalar_saddle_grid(f, ((-2.0, 2.0), (-2.0, 2.0)))
    err = max(abs(u + 1.0 / 6.0), abs(v + 1.0 / 3.0))
    return _result("scalar_saddle", err, tol, 1, start)


def _result(name, err, tol, count, start):
    status = "pass" if err <= tol else "fail"
    return CheckResult(name, status, float(err), float(tol), count, time.perf_counter() - start)


def run_suite(seed=0):
    return [
        riccati_equivalence(seed=seed),
        game_equivalence(seed=seed + 1),
        gamma_limit(seed=seed + 2),
        scalar_saddle(),
    ]


__all__ = [
    "CheckResult",
    "LQInstance",
    "controllable",
    "game_equivalence",
    "gamma_limit",
    "lti_testbed",
    "random_lq_instance",
    "riccati_equivalence",
    "run_suite",
    "scalar_saddle",
]
