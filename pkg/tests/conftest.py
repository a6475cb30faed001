"""Shared fixtures, independent oracles and the acceptance report hook."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad_vec
from scipy.linalg import expm

from kinorrt._backend import COMPILED
from kinorrt.dynamics import LtiSystem

KERNEL_SETS = ["python"] + (["compiled"] if COMPILED is not None else [])

# lines printed by the acceptance tests, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# -- systems -------------------------------------------------------------------


def fig2_system() -> LtiSystem:
    return LtiSystem([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [0.0, 0.0], [[1.0]])


def oscillator_system() -> LtiSystem:
    """Lightly damped oscillator: controllable, not nilpotent."""
    return LtiSystem([[0.0, 1.0], [-1.0, -0.2]], [[0.0], [1.0]], [0.0, 0.5], [[2.0]])


def chain_system(n: int, scale: float = 1.0, r: float = 1.0) -> LtiSystem:
    """Integrator chain of length ``n`` driven at the end."""
    A = np.diag(np.full(n - 1, scale), 1)
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    return LtiSystem(A, B, np.zeros(n), [[r]])


@pytest.fixture
def fig2():
    return fig2_system()


@pytest.fixture
def oscillator():
    return oscillator_system()


# -- oracles (scipy, independent of the package's formulas) -----------------------


def gramian_oracle(sys: LtiSystem, t: float) -> np.ndarray:
    """``int_0^t e^{A(t-s)} B R^-1 B^T e^{A^T(t-s)} ds`` by adaptive quadrature."""
    M = sys.B @ np.linalg.solve(sys.R, sys.B.T)

    def f(s):
        E = expm(sys.A * (t - s))
        return E @ M @ E.T

    return quad_vec(f, 0.0, t, epsabs=1e-13, epsrel=1e-12)[0]


def drift_oracle(sys: LtiSystem, x0, t: float) -> np.ndarray:
    """``e^{At} x0 + int_0^t e^{A(t-s)} c ds``."""
    x0 = np.asarray(x0, dtype=float)
    integral = quad_vec(lambda s: expm(sys.A * (t - s)) @ sys.c, 0.0, t, epsabs=1e-13, epsrel=1e-12)[0]
    return expm(sys.A * t) @ x0 + integral


def cost_oracle(sys: LtiSystem, x0, x1, t: float) -> float:
    delta = np.asarray(x1, dtype=float) - drift_oracle(sys, x0, t)
    return t + float(delta @ np.linalg.solve(gramian_oracle(sys, t), delta))


def fig2_cost(t):
    """Closed form of the cost for the unit double integrator from (0,0) to (1,1)."""
    t = np.asarray(t, dtype=float)
    return t + 12.0 / t**3 - 12.0 / t**2 + 4.0 / t


FIG2_TAU = math.sqrt(7.0) - 1.0


def segment_hits_box(p0, p1, lo, hi) -> bool:
    """Slab test: does the closed segment ``p0 -> p1`` meet the box ``[lo, hi]``?"""
    p0, p1 = np.asarray(p0, dtype=float), np.asarray(p1, dtype=float)
    d = p1 - p0
    t0, t1 = 0.0, 1.0
    for i in range(p0.size):
        if abs(d[i]) < 1e-15:
            if p0[i] < lo[i] or p0[i] > hi[i]:
                return False
            continue
        a, b = (lo[i] - p0[i]) / d[i], (hi[i] - p0[i]) / d[i]
        t0, t1 = max(t0, min(a, b)), min(t1, max(a, b))
        if t0 > t1:
            return False
    return True


def random_pairs(env, k: int, rng, max_tries: int = 100_000) -> list[tuple[np.ndarray, np.ndarray]]:
    """``k`` pairs of free states drawn uniformly within the environment bounds."""
    out = []
    lo, hi = env.state_lower, env.state_upper
    for _ in range(max_tries):
        if len(out) == k:
            break
        a, b = rng.uniform(lo, hi), rng.uniform(lo, hi)
        if env.state_free(a) and env.state_free(b):
            out.append((a, b))
    return out
