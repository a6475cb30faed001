"""Per-system polynomial precomputation for the closed-form (nilpotent) backend.

Everything that depends only on the system is expanded once into
coefficient tensors so that, for a query ``z = (x0, x1 - x0, 1)``,

* ``N(tau) = tau^t_shift * sum_k (z^T T_k z) tau^k`` equals ``cdot(tau) det(G(tau))^2``,
* ``Q(tau) = sum_k (z^T S_k z) tau^k`` and ``D(tau) = sum_k dlt_k tau^k``
  give the cost as ``tau + Q / D``.

The expansion (Gramian, determinant, adjugate, quadratic forms) runs in exact
rational arithmetic and is rounded to float64 once at the end. Gramians of
integrator chains are Hilbert-like, so a floating-point Laplace expansion
loses the determinant entirely to cancellation, and coefficients that are
zero in exact arithmetic would otherwise surface as rounding residue and put
spurious roots near ``tau = 0``. Queries carry the displacement
``x1 - x0`` rather than ``x1`` so that nearby state pairs do not cancel
large ``x0 x1`` products in the quadratic forms.
"""

from __future__ import annotations

from functools import cached_property
from math import factorial

import flint
import numpy as np

from kinorrt.dynamics import LtiSystem, exp_coefficients, is_controllable, nilpotency
from kinorrt.errors import BackendError, NotControllableError

_ZERO = flint.fmpq_poly([])


def _q(x: float) -> flint.fmpq:
    num, den = float(x).as_integer_ratio()
    return flint.fmpq(num, den)


def _qmat(a: np.ndarray) -> flint.fmpq_mat:
    a = np.atleast_2d(a)
    return flint.fmpq_mat(a.shape[0], a.shape[1], [_q(v) for v in a.ravel()])


def _rows(m: flint.fmpq_mat) -> list[list[flint.fmpq]]:
    return [[m[i, j] for j in range(m.ncols())] for i in range(m.nrows())]


def _pmatmul(a, b):
    """Product of matrices whose entries are ``fmpq_poly`` (zeros skipped)."""
    n, k, m = len(a), len(b), len(b[0])
    out = []
    for i in range(n):
        row = []
        for j in range(m):
            acc = _ZERO
            for t in range(k):
                x, y = a[i][t], b[t][j]
                if x != 0 and y != 0:
                    acc = acc + x * y
            row.append(acc)
        out.append(row)
    return out


def _transpose(a):
    return [list(col) for col in zip(*a)]


def _bit_position(mask: int, j: int) -> int:
    return bin(mask & ((1 << j) - 1)).count("1")


def _minors(G, rows: list[int], n: int) -> dict[int, flint.fmpq_poly]:
    """Determinants of ``G[rows, S]`` for every column set ``S`` with ``|S| = len(rows)``.

    Laplace expansion along the last row, built one row at a time over column
    bitmasks; subsets whose partial minor vanishes are dropped, which keeps
    block-structured Gramians (e.g. the decoupled quadrotor axes) cheap.
    """
    layer = {0: flint.fmpq_poly([1])}
    for level, r in enumerate(rows):
        nxt: dict[int, flint.fmpq_poly] = {}
        for S, f in layer.items():
            for j in range(n):
                if S >> j & 1 or G[r][j] == 0:
                    continue
                S2 = S | (1 << j)
                term = G[r][j] * f
                if (level + _bit_position(S2, j)) % 2:
                    term = -term
                nxt[S2] = nxt[S2] + term if S2 in nxt else term
        layer = {S: v for S, v in nxt.items() if v != 0}
    return layer


def det_adj(G) -> tuple[flint.fmpq_poly, list[list[flint.fmpq_poly]]]:
    """Exact determinant and adjugate of a square matrix of ``fmpq_poly``."""
    n = len(G)
    full = (1 << n) - 1
    det = _minors(G, list(range(n)), n).get(full, _ZERO)
    adj = [[_ZERO] * n for _ in range(n)]
    if n == 1:
        adj[0][0] = flint.fmpq_poly([1])
        return det, adj
    for i in range(n):
        minors = _minors(G, [r for r in range(n) if r != i], n)
        for j in range(n):
            cof = minors.get(full & ~(1 << j), _ZERO)
            adj[j][i] = -cof if (i + j) % 2 else cof
    return det, adj


def _coeff_array(polys, shape) -> np.ndarray:
    """Float tensor of shape ``shape + (K,)`` from nested lists of ``fmpq_poly``."""
    flat = list(_flatten(polys, len(shape)))
    K = max((p.degree() + 1 for p in flat), default=1)
    K = max(K, 1)
    out = np.zeros((len(flat), K))
    for idx, p in enumerate(flat):
        for k, c in enumerate(p.coeffs()):
            out[idx, k] = float(c)
    return out.reshape(tuple(shape) + (K,))


def _flatten(nested, depth: int):
    if depth == 0:
        yield nested
        return
    for item in nested:
        yield from _flatten(item, depth - 1)


def _span(arr: np.ndarray) -> tuple[int, int]:
    nz = np.flatnonzero(np.any(arr.reshape(-1, arr.shape[-1]) != 0.0, axis=0))
    if nz.size == 0:
        return 0, -1
    return int(nz[0]), int(nz[-1])


def _sym_stack(arr: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Symmetrize ``(p, p, K)`` and move the coefficient axis first."""
    K = arr.shape[-1]
    sub = np.zeros(arr.shape[:-1] + (hi - lo + 1,))
    top = min(hi + 1, K)
    sub[..., : top - lo] = arr[..., lo:top]
    sub = 0.5 * (sub + sub.transpose(1, 0, 2))
    return np.ascontiguousarray(sub.transpose(2, 0, 1))


def _coo(stack: np.ndarray):
    """Upper-triangle COO of symmetric slices, off-diagonal entries doubled."""
    k, i, j = np.nonzero(np.triu(np.ones(stack.shape[1:], dtype=bool))[None] & (stack != 0.0))
    v = stack[k, i, j] * np.where(i == j, 1.0, 2.0)
    return (k.astype(np.int64), i.astype(np.int64), j.astype(np.int64), np.ascontiguousarray(v))


class ClosedFormData:
    """Everything the closed-form backend needs about one nilpotent system."""

    def __init__(self, sys: LtiSystem):
        info = nilpotency(sys)
        if not info.is_nilpotent:
            raise BackendError("closed-form steering requires a nilpotent dynamics matrix")
        if not is_controllable(sys):
            raise NotControllableError("system is not controllable")
        n = sys.n
        # A^n = 0 for any nilpotent A; the numeric index can undercount when
        # entry scales are mixed, and surplus exact terms are simply zero
        k = n
        self.n = n
        self.index = info.index
        A, M, c = sys.A, sys.BRB, sys.c

        Am = _qmat(A)
        Bm = _qmat(sys.B)
        Mm = Bm * _qmat(sys.R).inv() * Bm.transpose()
        cq = [_q(v) for v in c]

        # exact E_j = A^j / j!
        Em = []
        P = flint.fmpq_mat(n, n, [int(i == j) for i in range(n) for j in range(n)])
        for j in range(k):
            Em.append(P * flint.fmpq(1, factorial(j)))
            P = P * Am
        Aq, Mq, Eq = _rows(Am), _rows(Mm), [_rows(E) for E in Em]

        # G(t) = sum_{i,j} E_i M E_j^T t^(i+j+1) / (i+j+1)
        G = [[_ZERO] * n for _ in range(n)]
        for i in range(k):
            EM = Em[i] * Mm
            for j in range(k):
                blk = EM * Em[j].transpose()
                pw = i + j + 1
                for a in range(n):
                    for b in range(n):
                        if blk[a, b] != 0:
                            coeffs = [0] * pw + [blk[a, b] / pw]
                            G[a][b] = G[a][b] + flint.fmpq_poly(coeffs)
        self.gramian_coef = np.ascontiguousarray(_coeff_array(G, (n, n)).transpose(2, 0, 1))

        det, adj = det_adj(G)
        if det == 0:
            raise NotControllableError("Gramian determinant vanishes identically")

        # delta(t) = x1 - xbar(t) = L(t) z, z = (x0, w, 1), x1 = x0 + w
        p = 2 * n + 1
        L = [[_ZERO] * p for _ in range(n)]
        for a in range(n):
            L[a][n + a] = flint.fmpq_poly([1])
            for b in range(n):
                # x0 - exp(A t) x0: the identity term cancels exactly
                coeffs = [flint.fmpq(0)] + [-Eq[j][a][b] for j in range(1, k)]
                if any(v != 0 for v in coeffs):
                    L[a][b] = flint.fmpq_poly(coeffs)
            Ec = [sum((Eq[j][a][b] * cq[b] for b in range(n)), flint.fmpq(0)) / (j + 1) for j in range(k)]
            if any(v != 0 for v in Ec):
                L[a][2 * n] = flint.fmpq_poly([0] + [-v for v in Ec])

        W = _pmatmul(adj, L)  # det(G) d(t) = W(t) z
        self._W, self._det = W, det
        WT = _transpose(W)
        Mp = [[flint.fmpq_poly([v]) if v != 0 else _ZERO for v in row] for row in Mq]
        MW = _pmatmul(Mp, W)
        # (A x1 + c) = K z
        Kp = [[_ZERO] * p for _ in range(n)]
        for a in range(n):
            for b in range(n):
                if Aq[a][b] != 0:
                    Kp[a][b] = flint.fmpq_poly([Aq[a][b]])
                    Kp[a][n + b] = flint.fmpq_poly([Aq[a][b]])
            if cq[a] != 0:
                Kp[a][2 * n] = flint.fmpq_poly([cq[a]])
        KW = _pmatmul(_transpose(Kp), W)
        WMW = _pmatmul(WT, MW)
        det2 = det * det
        T = [[_ZERO] * p for _ in range(p)]
        for i in range(p):
            for j in range(p):
                T[i][j] = -(det * (KW[i][j] + KW[j][i])) - WMW[i][j]
        T[2 * n][2 * n] = T[2 * n][2 * n] + det2
        S = _pmatmul(_transpose(L), W)

        Tf = _coeff_array(T, (p, p))
        lo, hi = _span(Tf)
        if hi < lo:
            raise NotControllableError("derivative numerator vanishes identically")
        self.t_shift = lo
        self.T = _sym_stack(Tf, lo, hi)

        Sf = _coeff_array(S, (p, p))
        detf = _coeff_array([det], (1,))[0]
        slo, shi = _span(Sf)
        dlo, dhi = _span(detf[None])
        qlo = min(slo, dlo) if shi >= slo else dlo
        qhi = max(shi, dhi)
        self.q_shift = qlo
        self.S = _sym_stack(Sf, qlo, qhi)
        dl = np.zeros(qhi - qlo + 1)
        top = min(qhi + 1, detf.size)
        dl[: top - qlo] = detf[qlo:top]
        self.dlt = dl

        E = exp_coefficients(A, k)
        self.exp_coef = E
        cc = np.zeros((k + 1, n))
        for j in range(k):
            cc[j + 1] = E[j] @ c / (j + 1)
        self.drift_c_coef = cc

        # composite flow for trajectory reconstruction: H = [[A, M], [0, -A^T]]
        H = np.zeros((2 * n, 2 * n))
        H[:n, :n] = A
        H[:n, n:] = M
        H[n:, n:] = -A.T
        # block triangular with nilpotent diagonal blocks, so H^(2n) = 0
        J = 2 * n
        self.composite = H
        self.composite_coef = exp_coefficients(H, J)
        self.composite_drift = np.zeros((J + 1, 2 * n))
        cz = np.concatenate([c, np.zeros(n)])
        for j in range(J):
            # integral of exp(H s) (c, 0) ds over [0, sigma], coefficient of sigma^(j+1)
            self.composite_drift[j + 1] = self.composite_coef[j] @ cz / (j + 1)

    @cached_property
    def T_coo(self):
        return _coo(self.T)

    @cached_property
    def S_coo(self):
        return _coo(self.S)

    def gramian(self, t: float) -> np.ndarray:
        G = np.zeros((self.n, self.n))
        for coef in self.gramian_coef[::-1]:
            G = G * t + coef
        return G

    def drift(self, x0: np.ndarray, t: float) -> np.ndarray:
        out = np.zeros(self.n)
        for j in range(self.exp_coef.shape[0] - 1, -1, -1):
            out = out * t + self.exp_coef[j] @ x0
        return out + np.polynomial.polynomial.polyval(t, self.drift_c_coef)

    def costate(self, x0: np.ndarray, x1: np.ndarray, t: float) -> np.ndarray:
        """``d(t)`` in exact rational arithmetic, rounded once.

        ``G`` grows ill-conditioned at long horizons (the car's reaches 1e10),
        and a float solve then leaves ~cond * eps relative error in ``d``,
        which the backward trajectory flow carries straight into ``x(0)``.
        """
        z = [_q(v) for v in x0] + [_q(b) - _q(a) for a, b in zip(x0, x1)] + [flint.fmpq(1)]
        tq = _q(t)
        den = self._det(tq)
        out = np.empty(self.n)
        for a, row in enumerate(self._W):
            acc = flint.fmpq(0)
            for w, zj in zip(row, z):
                if w != 0 and zj != 0:
                    acc += w(tq) * zj
            out[a] = float(acc / den)
        return out

    def trajectory_coefficients(self, x1: np.ndarray, d: np.ndarray) -> np.ndarray:
        """``V`` with ``(x, y)(tau + s) = sum_j V[j] s^j`` for ``-tau <= s <= 0``."""
        J = self.composite_coef.shape[0]
        V = np.array(self.composite_drift)
        V[:J] += self.composite_coef @ np.concatenate([x1, d])
        return V
