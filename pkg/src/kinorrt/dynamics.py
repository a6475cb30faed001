"""Linear time-invariant systems and the matrix utilities the steering solver needs."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import factorial

import numpy as np

from kinorrt.errors import BackendError, ConfigurationError

#: relative singular-value threshold used by :func:`controllability_rank`
RANK_RTOL = 1e-12
#: relative entry tolerance used to decide that a matrix power vanished
NILPOTENT_TOL = 1e-12


def _as_matrix(value, name: str, ndim: int = 2) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != ndim:
        raise ConfigurationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """Dynamics ``xdot = A x + B u + c`` with running cost ``1 + u^T R u``.

    Arrays are copied and frozen on construction. Controllability is not
    enforced here because linearizations of nonlinear models may legitimately
    lose it; the steering code raises
    :class:`~kinorrt.errors.NotControllableError` when it matters.
    """

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    R: np.ndarray

    def __post_init__(self) -> None:
        A = _as_matrix(self.A, "A")
        B = np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        B = _as_matrix(B, "B")
        c = _as_matrix(np.ravel(self.c), "c", ndim=1)
        R = np.array(self.R, dtype=float)
        if R.ndim == 0:
            R = R.reshape(1, 1)
        R = _as_matrix(R, "R")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ConfigurationError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ConfigurationError(f"B must have {n} rows, got {B.shape}")
        if c.shape != (n,):
            raise ConfigurationError(f"c must have length {n}, got {c.shape}")
        m = B.shape[1]
        if R.shape != (m, m):
            raise ConfigurationError(f"R must be {m}x{m}, got {R.shape}")
        if not np.allclose(R, R.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(R).max())):
            raise ConfigurationError("R must be symmetric")
        if np.linalg.eigvalsh(R).min() <= 0.0:
            raise ConfigurationError("R must be positive-definite")
        for name, arr in (("A", A), ("B", B), ("c", c), ("R", R)):
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @cached_property
    def R_inv(self) -> np.ndarray:
        return np.linalg.inv(self.R)

    @cached_property
    def BRB(self) -> np.ndarray:
        """``B R^-1 B^T``, symmetrized."""
        M = self.B @ self.R_inv @ self.B.T
        return 0.5 * (M + M.T)

    @cached_property
    def control_gain(self) -> np.ndarray:
        """``R^-1 B^T``: maps the costate ``y`` to the control ``u``."""
        return self.R_inv @ self.B.T

    def equals(self, other: "LtiSystem") -> bool:
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in "ABcR")


@dataclass(frozen=True)
class NilpotencyInfo:
    is_nilpotent: bool
    index: int | None = None


def controllability_matrix(sys: LtiSystem) -> np.ndarray:
    blocks = [sys.B]
    for _ in range(sys.n - 1):
        blocks.append(sys.A @ blocks[-1])
    return np.hstack(blocks)


def controllability_rank(sys: LtiSystem, rtol: float = RANK_RTOL) -> int:
    """Numerical rank of ``[B, AB, ..., A^(n-1) B]``.

    Singular values below ``max(shape) * sigma_max * rtol`` count as zero.
    """
    C = controllability_matrix(sys)
    sv = np.linalg.svd(C, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > max(C.shape) * sv[0] * rtol))


def is_controllable(sys: LtiSystem, rtol: float = RANK_RTOL) -> bool:
    return controllability_rank(sys, rtol) == sys.n


def _nilpotency_of(A: np.ndarray) -> NilpotencyInfo:
    n = A.shape[0]
    scale = np.abs(A).max() if A.size else 0.0
    if scale == 0.0:
        return NilpotencyInfo(True, 1)
    P = np.eye(n)
    for k in range(1, n + 1):
        P = P @ A
        if np.abs(P).max() <= NILPOTENT_TOL * scale**k:
            return NilpotencyInfo(True, k)
    return NilpotencyInfo(False, None)


def nilpotency(sys: LtiSystem | np.ndarray) -> NilpotencyInfo:
    """Whether ``A`` is nilpotent and, if so, the smallest ``k`` with ``A^k = 0``."""
    A = sys.A if isinstance(sys, LtiSystem) else np.asarray(sys, dtype=float)
    return _nilpotency_of(A)


def exp_coefficients(A: np.ndarray, index: int) -> np.ndarray:
    """``A^k / k!`` for ``k < index`` stacked along axis 0."""
    n = A.shape[0]
    out = np.empty((index, n, n))
    P = np.eye(n)
    for k in range(index):
        out[k] = P / factorial(k)
        P = P @ A
    return out


def matexp_poly(sys: LtiSystem | np.ndarray, t: float) -> np.ndarray:
    """``exp(A t)`` as the finite series ``sum_k (A t)^k / k!`` for nilpotent ``A``."""
    A = sys.A if isinstance(sys, LtiSystem) else np.asarray(sys, dtype=float)
    info = _nilpotency_of(A)
    if not info.is_nilpotent:
        raise BackendError("matexp_poly requires a nilpotent dynamics matrix")
    coeffs = exp_coefficients(A, info.index)
    out = np.zeros_like(A)
    for k in range(info.index - 1, -1, -1):
        out = out * t + coeffs[k]
    return out
