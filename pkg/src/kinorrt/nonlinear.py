"""Nonlinear dynamics handled by first-order Taylor linearization about a point.

The planner relinearizes about every sampled state with ``u_hat = 0`` and
steers with the resulting affine system
``xdot = A x + B u + c`` where ``c = f(x_hat, u_hat) - A x_hat - B u_hat``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from kinorrt.dynamics import LtiSystem


@dataclass(frozen=True, eq=False)
class NonlinearSystem:
    """``xdot = f(x, u)`` with analytic Jacobians and control weight ``R``."""

    n: int
    m: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jacobian_x: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jacobian_u: Callable[[np.ndarray, np.ndarray], np.ndarray]
    R: np.ndarray
    name: str = "nonlinear"

    def __post_init__(self):
        R = np.array(self.R, dtype=float).reshape(self.m, self.m)
        R.setflags(write=False)
        object.__setattr__(self, "R", R)

    def linearize_at(self, x_hat, u_hat=None) -> LtiSystem:
        return linearize_at(self, x_hat, u_hat)

    def rk4_flow(self, x0, u_of_t: Callable[[float], np.ndarray], tau: float, steps: int) -> np.ndarray:
        """Integrate the true dynamics with RK4; returns ``steps + 1`` states."""
        h = tau / steps
        x = np.array(x0, dtype=float)
        out = [x.copy()]
        for k in range(steps):
            t = k * h
            k1 = self.f(x, u_of_t(t))
            k2 = self.f(x + 0.5 * h * k1, u_of_t(t + 0.5 * h))
            k3 = self.f(x + 0.5 * h * k2, u_of_t(t + 0.5 * h))
            k4 = self.f(x + h * k3, u_of_t(t + h))
            x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            out.append(x.copy())
        return np.array(out)


def linearize_at(sys: NonlinearSystem, x_hat, u_hat=None) -> LtiSystem:
    """Affine Taylor model of ``sys`` about ``(x_hat, u_hat)``; ``u_hat`` defaults to 0."""
    x_hat = np.asarray(x_hat, dtype=float)
    u_hat = np.zeros(sys.m) if u_hat is None else np.asarray(u_hat, dtype=float)
    A = np.asarray(sys.jacobian_x(x_hat, u_hat), dtype=float)
    B = np.asarray(sys.jacobian_u(x_hat, u_hat), dtype=float)
    c = np.asarray(sys.f(x_hat, u_hat), dtype=float) - A @ x_hat - B @ u_hat
    return LtiSystem(A, B, c, sys.R)


def affine_as_nonlinear(lin: LtiSystem) -> NonlinearSystem:
    """Wrap ``xdot = A x + B u + c`` in the nonlinear interface."""
    A, B, c = lin.A, lin.B, lin.c
    return NonlinearSystem(
        lin.n,
        lin.m,
        lambda x, u: A @ x + B @ u + c,
        lambda x, u: A.copy(),
        lambda x, u: B.copy(),
        lin.R,
        name="affine",
    )


# -- car-like robot ------------------------------------------------------------
# state (x, y, theta, v, kappa), control (u_v, u_kappa)


def car_dynamics(x, u) -> np.ndarray:
    """``(v cos theta, v sin theta, v kappa, u_v, u_kappa)``."""
    _, _, th, v, kap = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.array([v * np.cos(th), v * np.sin(th), v * kap, u[0], u[1]])


def car_jacobian_x(x, u=None) -> np.ndarray:
    _, _, th, v, kap = np.asarray(x, dtype=float)
    s, c = np.sin(th), np.cos(th)
    J = np.zeros((5, 5))
    J[0, 2] = -v * s
    J[0, 3] = c
    J[1, 2] = v * c
    J[1, 3] = s
    J[2, 3] = kap
    J[2, 4] = v
    return J


def car_jacobian_u(x=None, u=None) -> np.ndarray:
    J = np.zeros((5, 2))
    J[3, 0] = 1.0
    J[4, 1] = 1.0
    return J


def car_system(R=None) -> NonlinearSystem:
    """Car-like robot with control weight ``R`` (identity by default)."""
    R = np.eye(2) if R is None else np.asarray(R, dtype=float)
    return NonlinearSystem(5, 2, car_dynamics, car_jacobian_x, car_jacobian_u, R, name="car")


def finite_difference_jacobians(sys: NonlinearSystem, x, u, eps: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference ``(df/dx, df/du)``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    Jx = np.empty((sys.n, sys.n))
    Ju = np.empty((sys.n, sys.m))
    for i in range(sys.n):
        e = np.zeros(sys.n)
        e[i] = eps
        Jx[:, i] = (sys.f(x + e, u) - sys.f(x - e, u)) / (2 * eps)
    for i in range(sys.m):
        e = np.zeros(sys.m)
        e[i] = eps
        Ju[:, i] = (sys.f(x, u + e) - sys.f(x, u - e)) / (2 * eps)
    return Jx, Ju
