"""Optimal fixed-final-state, free-final-time connections between states.

For ``xdot = A x + B u + c`` and cost ``int_0^tau (1 + u^T R u) dt`` the cost
of arriving at ``x1`` at time ``tau`` is ``c(tau) = tau + delta^T G(tau)^-1 delta``
with ``delta = x1 - xbar(tau)``. Two backends minimize it over ``tau``:

``closed_form``
    Nilpotent ``A`` only. ``G`` and ``xbar`` are matrix polynomials, so
    ``cdot(tau) det(G)^2`` is a polynomial whose positive real roots are the
    candidate optima.
``rk4``
    Any ``A``. Integrates the Gramian and drift ODEs forward with a fixed step
    and stops once ``tau`` exceeds the running minimum cost (valid because
    ``c(tau) > tau``).

Example
-------
>>> import numpy as np
>>> from kinorrt.dynamics import LtiSystem
>>> sys = LtiSystem([[0, 1], [0, 0]], [[0], [1]], [0, 0], [[1]])
>>> conn = optimal_arrival_time(sys, np.zeros(2), np.ones(2))
>>> round(conn.tau_star, 6)
1.645751
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field

import numpy as np

from kinorrt._backend import KernelSet, get_kernels
from kinorrt.dynamics import LtiSystem, is_controllable, nilpotency
from kinorrt.errors import BackendError, IllConditionedError, NoConnectionError, NotControllableError
from kinorrt.steer._polytensor import ClosedFormData

__all__ = [
    "BACKENDS",
    "CostProfile",
    "OptimalConnection",
    "Trajectory",
    "Steer",
    "get_steer",
    "resolve_backend",
    "gramian",
    "drift_state",
    "connection_cost",
    "optimal_arrival_time",
    "connect",
    "default_sample_dt",
]

BACKENDS = ("closed_form", "rk4")
_ALIASES = {"closed": "closed_form", "closed_form": "closed_form", "closed-form": "closed_form", "rk4": "rk4"}

TAU_MIN = 1e-6
RK4_STEP_FRACTION = 0.002
COND_MAX = 1e12
SAMPLE_DT_BOUNDS = (1e-4, 0.05)
#: single-point rk4 evaluations take at least RK4_MIN_STEPS steps with ``h * ||A|| <= RK4_POINT_STEP``
RK4_MIN_STEPS = 200
RK4_POINT_STEP = 0.02


@dataclass(frozen=True)
class CostProfile:
    """``c(tau)``, its derivative and ``d(tau) = G(tau)^-1 (x1 - xbar(tau))``."""

    tau: float
    cost: float
    cost_derivative: float
    d: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """State and control samples on ``t`` ascending from 0 to ``tau``."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray

    @property
    def tau(self) -> float:
        return float(self.t[-1]) if self.t.size else 0.0

    def __len__(self) -> int:
        return self.t.size

    @property
    def samples(self):
        return list(zip(self.t, self.x, self.u))

    def running_cost(self, R: np.ndarray) -> float:
        """Trapezoid estimate of ``int (1 + u^T R u) dt``."""
        if self.t.size < 2:
            return 0.0
        f = 1.0 + np.einsum("ti,ij,tj->t", self.u, R, self.u)
        return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(self.t)))

    @staticmethod
    def concatenate(parts: list["Trajectory"]) -> "Trajectory":
        """Join consecutive segments, shifting times and dropping duplicate joints."""
        ts, xs, us = [], [], []
        offset = 0.0
        for k, p in enumerate(parts):
            sl = slice(0, None) if k == 0 else slice(1, None)
            ts.append(p.t[sl] + offset)
            xs.append(p.x[sl])
            us.append(p.u[sl])
            offset += p.tau
        return Trajectory(np.concatenate(ts), np.vstack(xs), np.vstack(us))


@dataclass(frozen=True)
class OptimalConnection:
    """Minimizer of ``c(tau)`` between ``x0`` and ``x1``."""

    x0: np.ndarray
    x1: np.ndarray
    tau_star: float
    cost: float
    d_star: np.ndarray
    backend: str
    steer: "Steer" = field(repr=False, compare=False)

    @property
    def is_identity(self) -> bool:
        return self.tau_star == 0.0

    def trajectory(self, sample_dt: float | None = None) -> Trajectory:
        return self.steer.trajectory(self, sample_dt)


def default_sample_dt(tau: float) -> float:
    lo, hi = SAMPLE_DT_BOUNDS
    return float(min(max(tau / 100.0, lo), hi))


def segment_count(tau: float, sample_dt: float) -> int:
    return max(1, int(math.ceil(tau / sample_dt - 1e-9)))


def resolve_backend(sys: LtiSystem, backend: str = "auto") -> str:
    if backend == "auto":
        return "closed_form" if nilpotency(sys).is_nilpotent else "rk4"
    try:
        return _ALIASES[backend]
    except KeyError:
        raise BackendError(f"unknown backend {backend!r}; expected one of closed_form, rk4, auto") from None


def _solve_gramian(G: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """``G^-1 rhs`` via Cholesky of the diagonally equilibrated ``G``."""
    diag = np.diag(G)
    if not np.all(diag > 0.0):
        raise IllConditionedError("Gramian has a non-positive diagonal entry")
    s = 1.0 / np.sqrt(diag)
    try:
        L = np.linalg.cholesky(G * s[:, None] * s[None, :])
    except np.linalg.LinAlgError:
        raise IllConditionedError("Gramian is not numerically positive-definite") from None
    ld = np.diag(L)
    if (ld.max() / ld.min()) ** 2 > COND_MAX:
        raise IllConditionedError(f"Gramian condition estimate exceeds {COND_MAX:g}")
    y = np.linalg.solve(L, s * rhs)
    return s * np.linalg.solve(L.T, y)


class Steer:
    """Steering solver bound to one system and backend.

    Holds the per-system precomputation and offers batched cost queries for
    the planner alongside the single-pair API.
    """

    def __init__(
        self,
        sys: LtiSystem,
        backend: str = "auto",
        *,
        kernels: KernelSet | str | None = None,
        step_fraction: float = RK4_STEP_FRACTION,
        tau_min: float = TAU_MIN,
    ):
        self.sys = sys
        self.backend = resolve_backend(sys, backend)
        self.kernels = kernels if isinstance(kernels, KernelSet) else get_kernels(kernels)
        self.step_fraction = float(step_fraction)
        self.tau_min = float(tau_min)
        n = sys.n
        if self.backend == "closed_form":
            self.cf = ClosedFormData(sys)  # raises BackendError / NotControllableError
        else:
            self.cf = None
            if not is_controllable(sys):
                raise NotControllableError("system is not controllable")
        H = np.zeros((2 * n, 2 * n))
        H[:n, :n] = sys.A
        H[:n, n:] = sys.BRB
        H[n:, n:] = -sys.A.T
        self.H = H
        self.hc = np.concatenate([sys.c, np.zeros(n)])
        self.Ku = np.ascontiguousarray(sys.control_gain)
        self._norm_A = float(np.linalg.norm(sys.A, 2))

    # -- single-time evaluations -------------------------------------------

    def _rk4_state(self, x0: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        """``(G(t), xbar(t))`` by fixed-step RK4.

        The Gramian and drift ODEs are linear with constant coefficients, so
        one RK4 step is the affine map ``y <- P y + q`` on ``y = (vec G, xbar)``
        with ``P = sum_{j<=4} (hL)^j / j!``; applying it is the same
        integrator at one matrix-vector product per step.
        """
        sys = self.sys
        n = sys.n
        steps = max(RK4_MIN_STEPS, int(math.ceil(t * self._norm_A / RK4_POINT_STEP)))
        h = t / steps
        N = n * n + n
        L = np.zeros((N, N))
        eye = np.eye(n)
        L[: n * n, : n * n] = np.kron(sys.A, eye) + np.kron(eye, sys.A)  # row-major vec of AG + GA^T
        L[n * n :, n * n :] = sys.A
        b = np.concatenate([sys.BRB.ravel(), sys.c])
        Z = h * L
        Z2 = Z @ Z
        Z3 = Z2 @ Z
        # increment form y += D y + q with D = P - I: each entry is rounded
        # against its own size, which the small Gramian entries depend on
        D = Z + Z2 / 2.0 + Z3 / 6.0 + (Z3 @ Z) / 24.0
        q = h * (b + (Z / 2.0 + Z2 / 6.0 + Z3 / 24.0) @ b)
        y = np.concatenate([np.zeros(n * n), np.asarray(x0, dtype=float)])
        for _ in range(steps):
            y = y + (D @ y + q)
        G = y[: n * n].reshape(n, n)
        return 0.5 * (G + G.T), y[n * n :]

    def gramian(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("t must be non-negative")
        if self.cf is not None:
            return self.cf.gramian(t)
        return self._rk4_state(np.zeros(self.sys.n), t)[0]

    def drift(self, x0, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("t must be non-negative")
        x0 = np.asarray(x0, dtype=float)
        if self.cf is not None:
            return self.cf.drift(x0, t)
        return self._rk4_state(x0, t)[1]

    def cost_profile(self, x0, x1, tau: float) -> CostProfile:
        if not tau > 0:
            raise ValueError("tau must be positive")
        x0 = np.asarray(x0, dtype=float)
        x1 = np.asarray(x1, dtype=float)
        if self.cf is not None:
            G, xb = self.cf.gramian(tau), self.cf.drift(x0, tau)
        else:
            G, xb = self._rk4_state(x0, tau)
        delta = x1 - xb
        d = _solve_gramian(G, delta)
        cost = tau + float(delta @ d)
        sys = self.sys
        cdot = 1.0 - 2.0 * float((sys.A @ x1 + sys.c) @ d) - float(d @ sys.BRB @ d)
        return CostProfile(float(tau), cost, cdot, d)

    # -- optimal connections -------------------------------------------------

    def _batch(self, X: np.ndarray, x: np.ndarray, reverse: bool):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        x = np.asarray(x, dtype=float)
        if self.cf is not None:
            tau, cost = self.kernels.closed_costs(self.cf, X, x, reverse, self.tau_min)
            return tau, cost, None
        s = self.sys
        return self.kernels.rk4_costs(s.A, s.BRB, s.c, X, x, reverse, self.tau_min, self.step_fraction)

    def costs_to(self, X, x1):
        """``(tau*, c*, d*)`` from every row of ``X`` to ``x1``; ``d*`` is ``None`` for closed form."""
        return self._batch(X, x1, False)

    def costs_from(self, x0, X):
        """``(tau*, c*, d*)`` from ``x0`` to every row of ``X``."""
        return self._batch(X, x0, True)

    def final_costate(self, x0, x1, tau: float) -> np.ndarray:
        """``d(tau)`` for a known arrival time (closed form: exact rational evaluation)."""
        if self.cf is not None:
            return self.cf.costate(np.asarray(x0, dtype=float), np.asarray(x1, dtype=float), tau)
        return self.cost_profile(x0, x1, tau).d

    def connection(self, x0, x1) -> OptimalConnection:
        x0 = np.array(x0, dtype=float)
        x1 = np.array(x1, dtype=float)
        n = self.sys.n
        if x0.shape != (n,) or x1.shape != (n,):
            raise ValueError(f"states must have length {n}")
        tau, cost, d = self._batch(x0[None], x1, False)
        tau, cost = float(tau[0]), float(cost[0])
        if tau == 0.0 and cost == 0.0:
            return OptimalConnection(x0, x1, 0.0, 0.0, np.zeros(n), self.backend, self)
        if not math.isfinite(cost):
            raise NoConnectionError("no positive optimal arrival time found")
        if d is None:
            dstar = self.final_costate(x0, x1, tau)
        else:
            # the scan's costate carries its coarse step error, which the backward flow amplifies;
            # re-evaluate at tau* with the fine single-point integration
            prof = self.cost_profile(x0, x1, tau)
            dstar, cost = prof.d, prof.cost
        return OptimalConnection(x0, x1, tau, cost, dstar, self.backend, self)

    # -- trajectories ------------------------------------------------------

    def _flow_substeps(self, tau: float, cost: float, nseg: int) -> int:
        h = self.step_fraction * max(cost, tau)
        return max(1, int(math.ceil(tau / nseg / h - 1e-9)))

    def edge_states(self, x1, d, tau: float, cost: float, nseg: int) -> np.ndarray:
        """``(x, y)`` rows at ``t = tau * k / nseg``, ``k = 0..nseg``."""
        z_end = np.concatenate([np.asarray(x1, dtype=float), np.asarray(d, dtype=float)])
        if self.cf is not None:
            V = self.cf.trajectory_coefficients(z_end[: self.sys.n], z_end[self.sys.n :])
            return self.kernels.poly_states(V, tau, nseg)
        return self.kernels.rk4_flow(self.H, self.hc, z_end, tau, nseg, self._flow_substeps(tau, cost, nseg))

    def edge_free(self, x0, x1, tau: float, cost: float, d, sample_dt: float | None, env_args) -> bool:
        """Collision and bound sweep of the optimal edge ``x0 -> x1`` arriving at ``tau``.

        The rk4 backend needs the final costate ``d`` from its cost scan; the
        closed form recomputes it. A rejected Gramian solve counts as blocked.
        """
        if tau == 0.0:
            return True
        dt = default_sample_dt(tau) if sample_dt is None else sample_dt
        nseg = segment_count(tau, dt)
        if self.cf is not None:
            return self.kernels.closed_edge_free(self.cf, x0, x1, tau, nseg, self.Ku, env_args) == 1
        Z = self.edge_states(x1, d, tau, cost, nseg)
        return self.kernels.samples_free(Z, self.Ku, env_args)

    def trajectory(self, conn: OptimalConnection, sample_dt: float | None = None) -> Trajectory:
        n, m = self.sys.n, self.sys.m
        if conn.is_identity:
            return Trajectory(np.zeros(1), conn.x0[None].copy(), np.zeros((1, m)))
        dt = default_sample_dt(conn.tau_star) if sample_dt is None else float(sample_dt)
        if not dt > 0:
            raise ValueError("sample_dt must be positive")
        nseg = segment_count(conn.tau_star, dt)
        Z = self.edge_states(conn.x1, conn.d_star, conn.tau_star, conn.cost, nseg)
        t = conn.tau_star * np.arange(nseg + 1) / nseg
        t[-1] = conn.tau_star
        x = Z[:, :n]
        u = Z[:, n:] @ self.Ku.T
        return Trajectory(t, x, u)


_CACHE: "weakref.WeakKeyDictionary[LtiSystem, dict]" = weakref.WeakKeyDictionary()


def get_steer(sys: LtiSystem, backend: str = "auto", kernels: str | None = None) -> Steer:
    """Cached :class:`Steer` per ``(system, backend, kernels)``."""
    key = (resolve_backend(sys, backend), kernels)
    per = _CACHE.setdefault(sys, {})
    if key not in per:
        per[key] = Steer(sys, key[0], kernels=kernels)
    return per[key]


def gramian(sys: LtiSystem, t: float, backend: str = "auto") -> np.ndarray:
    """Weighted controllability Gramian ``G(t)``."""
    return get_steer(sys, backend).gramian(t)


def drift_state(sys: LtiSystem, x0, t: float, backend: str = "auto") -> np.ndarray:
    """State reached from ``x0`` after ``t`` under zero control."""
    return get_steer(sys, backend).drift(x0, t)


def connection_cost(sys: LtiSystem, x0, x1, tau: float, backend: str = "auto") -> CostProfile:
    """``c(tau)``, ``cdot(tau)`` and ``d(tau)`` for a fixed arrival time."""
    return get_steer(sys, backend).cost_profile(x0, x1, tau)


def optimal_arrival_time(sys: LtiSystem, x0, x1, backend: str = "auto") -> OptimalConnection:
    """Globally optimal arrival time and cost between two states."""
    return get_steer(sys, backend).connection(x0, x1)


def connect(sys: LtiSystem, x0, x1, sample_dt: float | None = None, backend: str = "auto") -> Trajectory:
    """Optimal trajectory from ``x0`` to ``x1`` sampled at ``sample_dt``."""
    return optimal_arrival_time(sys, x0, x1, backend).trajectory(sample_dt)
