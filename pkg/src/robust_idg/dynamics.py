"""Discrete-time dynamics: the mecanum platform, an LTI test system and
finite-difference linearization.

State layout for the platform is ``[x, y, theta, xdot, ydot, thetadot]``
in the world frame. Controls are wheel torques (or generalized forces, see
:class:`MecanumPlatform`), and the adversary's input enters the same
torque channel as the controls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import NonFiniteState

# cube root of the double-precision unit roundoff, the textbook central
# difference step
_FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)
_FD_STEP_2ND = np.finfo(float).eps ** (1.0 / 4.0)


def wrap_angle(theta):
    """Wrap an angle (or array of angles) to (-pi, pi]."""
    wrapped = np.mod(np.asarray(theta, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(wrapped == -np.pi, np.pi, wrapped)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteState(f"non-finite entry in {np.asarray(a)!r}")


@dataclass(frozen=True)
class MecanumParams:
    """Physical parameters of the four-wheel mecanum base.

    Units: kg, kg m^2, m, rad, N, rad/s and s. ``friction`` holds the
    per-wheel Coulomb friction magnitudes. ``com_offset`` is the distance
    of the centre of mass ahead of the geometric centre along the body x
    axis; at 0 the inertia matrix is ``diag(m, m, I_z)``.
    """

    mass: float = 20.0
    inertia_z: float = 1.0
    wheel_radius: float = 0.0475
    mount_distance: float = 0.3
    zeta: float = np.pi / 4
    friction: tuple = (0.03, 0.03, 0.03, 0.03)
    sign_width: float = 0.1
    k_fx: float = 10.0
    k_fy: float = 15.0
    k_ftheta: float = 1.0
    dt: float = 0.05
    com_offset: float = 0.0

    def __post_init__(self):
        for name in ("mass", "inertia_z", "wheel_radius", "mount_distance", "dt", "sign_width"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        fr = np.asarray(self.friction, dtype=float)
        if fr.shape != (4,) or np.any(fr < 0):
            raise ValueError("friction must be four nonnegative magnitudes")
        object.__setattr__(self, "friction", tuple(float(f) for f in fr))

    @property
    def force_gains(self):
        return np.array([self.k_fx, self.k_fy, self.k_ftheta])


def mecanum_B_matrix(theta, params):
    """Wheel/platform coupling matrix ``B(theta)`` (4x3).

    Row j maps world-frame generalized velocities to ``r`` times the speed
    of wheel j.
    """
    c, s = np.cos(theta), np.sin(theta)
    rot = -np.sqrt(2.0) * params.mount_distance * np.sin(params.zeta)
    return np.array(
        [
            [-(c - s), -(c + s), rot],
            [-(c + s), (c - s), rot],
            [(c - s), (c + s), rot],
            [(c + s), -(c - s), rot],
        ]
    )


def mecanum_S_matrix(wheel_speeds, params):
    """Diagonal matrix of smoothed wheel-speed signs, ``tanh(phidot / eps)``."""
    wheel_speeds = np.asarray(wheel_speeds, dtype=float)
    return np.diag(np.tanh(wheel_speeds / params.sign_width))


def wheel_speeds(x, params):
    """Wheel angular speeds from inverse kinematics, ``B(theta) qdot / r``."""
    x = np.asarray(x, dtype=float)
    return mecanum_B_matrix(x[2], params) @ x[3:6] / params.wheel_radius


def generalized_force(tau, speeds, params, theta=0.0):
    """Gain-scaled generalized force on the base from wheel torques.

    ``F_i = k_i * sum_j (tau_j - r sgn(phidot_j) f_j) * B_ji / r``, i.e. the
    partial of wheel speed j w.r.t. generalized velocity i is ``B_ji / r``.
    """
    B = mecanum_B_matrix(theta, params)
    r = params.wheel_radius
    drive = np.asarray(tau, dtype=float) - r * np.diag(mecanum_S_matrix(speeds, params)) * np.asarray(params.friction)
    return params.force_gains * (B.T @ drive / r)


def mass_matrix(theta, params):
    m, d = params.mass, params.com_offset
    c, s = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [m, 0.0, -m * d * s],
            [0.0, m, m * d * c],
            [-m * d * s, m * d * c, params.inertia_z + m * d * d],
        ]
    )


def coriolis_matrix(theta, thetadot, params):
    """Coriolis/centripetal matrix ``C`` so that ``C @ qdot`` is the bias force.

    Nonzero only when the centre of mass is offset from the wheel centre;
    then the world-frame translation couples to ``thetadot**2``.
    """
    m, d = params.mass, params.com_offset
    c, s = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [0.0, 0.0, -m * d * c * thetadot],
            [0.0, 0.0, -m * d * s * thetadot],
            [0.0, 0.0, 0.0],
        ]
    )


def forward_dynamics(x, u, v, params, control="wheels"):
    """Generalized accelerations of the base.

    ``qddot = -M^-1 C qdot - M^-1 K B^T (S f - (u + v) / r)`` where ``K`` is
    the diagonal force-gain matrix. With ``control="generalized"`` the
    inputs are generalized forces and bypass ``B^T / r``.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_finite(x, u, v)
    theta, qdot = x[2], x[3:6]
    B = mecanum_B_matrix(theta, params)
    S = np.tanh(B @ qdot / params.wheel_radius / params.sign_width)
    friction = B.T @ (S * np.asarray(params.friction))
    if control == "wheels":
        drive = B.T @ (u + v) / params.wheel_radius
    elif control == "generalized":
        drive = u + v
    else:
        raise ValueError(f"unknown control variant {control!r}")
    force = params.force_gains * (drive - friction)
    bias = coriolis_matrix(theta, x[5], params) @ qdot
    return np.linalg.solve(mass_matrix(theta, params), force - bias)


@dataclass(frozen=True)
class LocalDynamics:
    """Jacobians of one discrete step; second-order tensors are optional.

    Tensor layout: ``f_ux[i, a, j] = d^2 f_i / du_a dx_j`` (likewise for the
    other mixed blocks).
    """

    f_x: np.ndarray
    f_u: np.ndarray
    f_v: np.ndarray
    f_xx: Optional[np.ndarray] = None
    f_uu: Optional[np.ndarray] = None
    f_vv: Optional[np.ndarray] = None
    f_ux: Optional[np.ndarray] = None
    f_vx: Optional[np.ndarray] = None
    f_uv: Optional[np.ndarray] = None

    @property
    def has_second_order(self):
        return self.f_uu is not None


class Dynamics:
    """Discrete-time model ``x' = f(x, u, v, t)``.

    Subclasses set ``n``, ``m``, ``p`` and implement :meth:`step`.
    """

    n: int
    m: int
    p: int

    def step(self, x, u, v, t=0):
        raise NotImplementedError

    def linearize(self, x, u, v, t=0, second_order=False):
        return linearize(self, x, u, v, t, second_order=second_order)


class LTISystem(Dynamics):
    """``x' = A x + B u + D v``."""

    def __init__(self, A, B, D=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.n, self.m = self.B.shape
        if D is None:
            D = np.zeros((self.n, 0))
        self.D = np.asarray(D, dtype=float).reshape(self.n, -1)
        self.p = self.D.shape[1]

    def step(self, x, u, v, t=0):
        x, u, v = np.asarray(x, float), np.asarray(u, float), np.asarray(v, float)
        _check_finite(x, u, v)
        # an unstable system may overflow; the rollout reports it as divergence
        with np.errstate(over="ignore", invalid="ignore"):
            return self.A @ x + self.B @ u + self.D @ v

    def linearize(self, x, u, v, t=0, second_order=False):
        """Exact Jacobians; the second-order tensors are identically zero."""
        if not second_order:
            return LocalDynamics(self.A, self.B, self.D)
        n, m, p = self.n, self.m, self.p
        return LocalDynamics(
            self.A,
            self.B,
            self.D,
            f_xx=np.zeros((n, n, n)),
            f_uu=np.zeros((n, m, m)),
            f_vv=np.zeros((n, p, p)),
            f_ux=np.zeros((n, m, n)),
            f_vx=np.zeros((n, p, n)),
            f_uv=np.zeros((n, m, p)),
        )


class MecanumPlatform(Dynamics):
    """Mecanum base integrated with semi-implicit Euler.

    ``control="wheels"`` (default) uses the four wheel torques as inputs;
    ``control="generalized"`` uses a 3-vector of generalized forces. The
    adversary always has the same shape as the control.
    """

    n = 6

    def __init__(self, params=None, control="wheels"):
        self.params = params if params is not None else MecanumParams()
        if control not in ("wheels", "generalized"):
            raise ValueError(f"unknown control variant {control!r}")
        self.control = control
        self.m = self.p = 4 if control == "wheels" else 3

    def accel(self, x, u, v):
        return forward_dynamics(x, u, v, self.params, self.control)

    def step(self, x, u, v, t=0):
        return step(x, u, v, self.params, self.control)

    def constant_force_controls(self, horizon, theta0=0.0, force=(1.3, 0.8, 0.1)):
        """Constant open-loop schedule producing the generalized force ``force``.

        For the wheel-torque variant the 3-vector is mapped to the
        minimum-norm wheel torques with ``B(theta0)^T tau / r = force``.
        """
        force = np.asarray(force, dtype=float)
        if self.control == "generalized":
            u0 = force
        else:
            B = mecanum_B_matrix(theta0, self.params)
            u0 = self.params.wheel_radius * np.linalg.pinv(B.T) @ force
        return np.tile(u0, (horizon, 1))


def step(x, u, v, params, control="wheels"):
    """One semi-implicit Euler step: velocity first, then pose."""
    x = np.asarray(x, dtype=float)
    a = forward_dynamics(x, u, v, params, control)
    qdot = x[3:6] + params.dt * a
    q = x[0:3] + params.dt * qdot
    return np.concatenate([q, qdot])


def _jacobians(model, x, u, v, t, rel_step=_FD_STEP):
    n, m, p = len(x), len(u), len(v)
    z0 = np.concatenate([x, u, v])

    def f(z):
        return model.step(z[:n], z[n : n + m], z[n + m :], t)

    jac = np.empty((n, n + m + p))
    for i in range(n + m + p):
        h = rel_step * max(1.0, abs(z0[i]))
        zp = z0.copy()
        zm = z0.copy()
        zp[i] += h
        zm[i] -= h
        jac[:, i] = (f(zp) - f(zm)) / (zp[i] - zm[i])
    return jac


def linearize(model, x, u, v, t=0, second_order=False):
    """Central finite-difference Jacobians of ``model.step``.

    The step per coordinate is ``eps**(1/3) * max(1, |z_i|)``. When
    ``second_order`` is set, the second-derivative tensors are central
    differences of the Jacobians.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_finite(x, u, v)
    n, m = len(x), len(u)
    jac = _jacobians(model, x, u, v, t)
    _check_finite(jac)
    f_x, f_u, f_v = jac[:, :n], jac[:, n : n + m], jac[:, n + m :]
    if not second_order:
        return LocalDynamics(f_x, f_u, f_v)

    z0 = np.concatenate([x, u, v])
    N = len(z0)
    hess = np.empty((n, N, N))
    for k in range(N):
        h = _FD_STEP_2ND * max(1.0, abs(z0[k]))
        zp = z0.copy()
        zm = z0.copy()
        zp[k] += h
        zm[k] -= h
        jp = _jacobians(model, zp[:n], zp[n : n + m], zp[n + m :], t)
        jm = _jacobians(model, zm[:n], zm[n : n + m], zm[n + m :], t)
        hess[:, :, k] = (jp - jm) / (zp[k] - zm[k])
    hess = 0.5 * (hess + hess.transpose(0, 2, 1))
    xs, us, vs = slice(0, n), slice(n, n + m), slice(n + m, N)
    return LocalDynamics(
        f_x,
        f_u,
        f_v,
        f_xx=hess[:, xs, xs],
        f_uu=hess[:, us, us],
        f_vv=hess[:, vs, vs],
        f_ux=hess[:, us, xs],
        f_vx=hess[:, vs, xs],
        f_uv=hess[:, us, vs],
    )
