"""Pure-numpy implementations of the hot kernels.

Selected at import when the compiled ``_kernels`` extension is unavailable
(or when ``KINORRT_PURE_PYTHON=1``). Signatures mirror the extension exactly;
batch operations are vectorized over queries instead of looped.
"""

from __future__ import annotations

import math

import numpy as np

COMPILED = False

IMAG_RTOL = 1e-8
NEWTON_ITERS = 4
PILOT_H0 = 1e-3
PILOT_SUBSTEPS = 4
TAU_MAX = 1e6
MAX_SCAN_STEPS = 200_000
REFINE_DIVISIONS = 10
COND_MAX = 1e12


# -- closed form --------------------------------------------------------------


def _queries(X: np.ndarray, x: np.ndarray, reverse: bool) -> np.ndarray:
    """Rows ``(x0, x1 - x0, 1)``; ``reverse`` makes ``x`` the origin."""
    N, n = X.shape
    Z = np.empty((N, 2 * n + 1))
    if reverse:
        Z[:, :n] = x
        Z[:, n : 2 * n] = X - x
    else:
        Z[:, :n] = X
        Z[:, n : 2 * n] = x - X
    Z[:, 2 * n] = 1.0
    return Z


def _polyval_rows(coef: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Evaluate per-row polynomials ``coef (N, K)`` (ascending) at ``t (N, R)``."""
    out = np.zeros_like(t)
    for k in range(coef.shape[1] - 1, -1, -1):
        out = out * t + coef[:, k : k + 1]
    return out


def _real_positive_roots(a: np.ndarray, tau_min: float) -> np.ndarray:
    """Real roots above ``tau_min`` of each row polynomial, ``nan`` padded, ascending."""
    N, K = a.shape
    D = K - 1
    out = np.full((N, max(D, 1)), np.nan)
    if D < 1:
        return out
    lead = a[:, -1]
    full = lead != 0.0
    if np.any(full):
        b = a[full, :-1] / lead[full, None]
        comp = np.zeros((b.shape[0], D, D))
        comp[:, 0, :] = -b[:, ::-1]
        if D > 1:
            idx = np.arange(D - 1)
            comp[:, idx + 1, idx] = 1.0
        roots = np.linalg.eigvals(comp)
        keep = (np.abs(roots.imag) < IMAG_RTOL * (1.0 + np.abs(roots.real))) & (roots.real > tau_min)
        out[full] = np.where(keep, roots.real, np.nan)
    for i in np.flatnonzero(~full):
        coeffs = np.trim_zeros(a[i], "b")
        if coeffs.size < 2:
            continue
        r = np.roots(coeffs[::-1])
        r = r[(np.abs(r.imag) < IMAG_RTOL * (1.0 + np.abs(r.real))) & (r.real > tau_min)].real
        out[i, : r.size] = r
    return np.sort(out, axis=1)


def _newton_polish(a: np.ndarray, roots: np.ndarray) -> np.ndarray:
    da = a[:, 1:] * np.arange(1, a.shape[1])
    r = roots.copy()
    for _ in range(NEWTON_ITERS):
        f = _polyval_rows(a, r)
        df = _polyval_rows(da, r)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(df != 0.0, f / df, 0.0)
        cand = r - step
        # only accept steps that stay positive and shrink the residual
        with np.errstate(invalid="ignore"):
            better = (cand > 0.0) & (np.abs(_polyval_rows(a, cand)) <= np.abs(f))
        r = np.where(better, cand, r)
    return r


def closed_costs(T, S, dlt, X, x, reverse, tau_min):
    """Optimal ``(tau*, c*)`` for each query pair, closed-form backend."""
    X = np.ascontiguousarray(X, dtype=float)
    x = np.asarray(x, dtype=float)
    N, n = X.shape
    tau = np.full(N, np.inf)
    cost = np.full(N, np.inf)
    if N == 0:
        return tau, cost
    Z = _queries(X, x, reverse)
    ident = np.all(X == x, axis=1)
    a = np.einsum("ni,kij,nj->nk", Z, T, Z)
    q = np.einsum("ni,kij,nj->nk", Z, S, Z)
    roots = _real_positive_roots(a, tau_min)
    roots = _newton_polish(a, roots)
    valid = np.isfinite(roots) & (roots > tau_min)
    # tau_min is a candidate when the cost is increasing there (optimum below the domain)
    boundary = _polyval_rows(a, np.full((N, 1), tau_min))[:, 0] > 0.0
    roots = np.column_stack([np.where(boundary, tau_min, np.nan), roots])
    valid = np.column_stack([boundary, valid])
    r = np.where(valid, roots, 1.0)
    den = np.zeros_like(r)
    for k in range(dlt.size - 1, -1, -1):
        den = den * r + dlt[k]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        c = r + _polyval_rows(q, r) / den
    c = np.where(valid & (den > 0.0) & np.isfinite(c), c, np.inf)
    # roots are sorted ascending, so argmin returns the smallest tau on exact ties
    best = np.argmin(c, axis=1)
    rows = np.arange(N)
    cost = c[rows, best]
    tau = np.where(np.isfinite(cost), r[rows, best], np.inf)
    tau[ident] = 0.0
    cost[ident] = 0.0
    return tau, cost


# -- rk4 -----------------------------------------------------------------------


def _rk4_step(A, M, c, G, xb, h):
    """One RK4 step of Gdot = AG + GA^T + M and xbdot = A xb + c, batched."""

    def fG(G):
        P = A @ G
        return P + np.swapaxes(P, -1, -2) + M

    def fx(xb):
        return xb @ A.T + c

    k1, l1 = fG(G), fx(xb)
    k2, l2 = fG(G + 0.5 * h[:, None, None] * k1), fx(xb + 0.5 * h[:, None] * l1)
    k3, l3 = fG(G + 0.5 * h[:, None, None] * k2), fx(xb + 0.5 * h[:, None] * l2)
    k4, l4 = fG(G + h[:, None, None] * k3), fx(xb + h[:, None] * l3)
    G = G + (h / 6.0)[:, None, None] * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    xb = xb + (h / 6.0)[:, None] * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
    return G, xb


def _gram_cost(G, xb, x1, tau):
    """``tau + delta^T G^-1 delta`` with a condition guard; ``inf`` where rejected."""
    N, n, _ = G.shape
    cost = np.full(N, np.inf)
    d = np.zeros((N, n))
    diag = np.einsum("nii->ni", G)
    ok = np.all(diag > 0.0, axis=1)
    if not np.any(ok):
        return cost, d
    idx = np.flatnonzero(ok)
    s = 1.0 / np.sqrt(diag[idx])
    Gs = G[idx] * s[:, :, None] * s[:, None, :]
    pd = np.linalg.eigvalsh(Gs)[:, 0] > 0.0
    idx, s, Gs = idx[pd], s[pd], Gs[pd]
    if idx.size == 0:
        return cost, d
    Lc = np.linalg.cholesky(Gs)
    ld = np.einsum("nii->ni", Lc)
    cond = (ld.max(axis=1) / ld.min(axis=1)) ** 2
    good = cond <= COND_MAX
    idx, s, Gs = idx[good], s[good], Gs[good]
    if idx.size == 0:
        return cost, d
    delta = x1[idx] - xb[idx]
    ds = s * np.linalg.solve(Gs, (s * delta)[:, :, None])[:, :, 0]
    d[idx] = ds
    cost[idx] = tau[idx] + np.einsum("ni,ni->n", delta, ds)
    return cost, d


def rk4_costs(A, M, c, X, x, reverse, tau_min, step_fraction):
    """Optimal ``(tau*, c*, d*)`` per query by forward RK4 scanning of ``c(tau)``."""
    X = np.ascontiguousarray(X, dtype=float)
    x = np.asarray(x, dtype=float)
    N, n = X.shape
    tau_out = np.full(N, np.inf)
    cost_out = np.full(N, np.inf)
    d_out = np.zeros((N, n))
    if N == 0:
        return tau_out, cost_out, d_out
    if reverse:
        X0 = np.broadcast_to(x, (N, n)).copy()
        X1 = X.copy()
    else:
        X0 = X.copy()
        X1 = np.broadcast_to(x, (N, n)).copy()
    ident = np.all(X0 == X1, axis=1)
    live = np.flatnonzero(~ident)
    tau_out[ident] = 0.0
    cost_out[ident] = 0.0
    if live.size == 0:
        return tau_out, cost_out, d_out
    X0, X1 = X0[live], X1[live]
    L = live.size

    # pilot: geometric sweep for an upper bound on c*
    G = np.zeros((L, n, n))
    xb = X0.copy()
    t = np.zeros(L)
    c_up = np.full(L, np.inf)
    active = np.ones(L, dtype=bool)
    while np.any(active):
        idx = np.flatnonzero(active)
        span = np.maximum(t[idx], PILOT_H0)
        h = span / PILOT_SUBSTEPS
        g, xbb = G[idx], xb[idx]
        for _ in range(PILOT_SUBSTEPS):
            g, xbb = _rk4_step(A, M, c, g, xbb, h)
        G[idx], xb[idx] = g, xbb
        t[idx] += span
        cst, _ = _gram_cost(G[idx], xb[idx], X1[idx], t[idx])
        c_up[idx] = np.minimum(c_up[idx], cst)
        active[idx] = (t[idx] < c_up[idx]) & (t[idx] < TAU_MAX)
    h = step_fraction * c_up
    scan = np.isfinite(h)

    # main scan with fixed per-query step, stopping once tau >= running minimum
    best_c = np.full(L, np.inf)
    best_t = np.zeros(L)
    best_d = np.zeros((L, n))
    anchor_G = np.zeros((L, n, n))
    anchor_x = X0.copy()
    anchor_t = np.zeros(L)
    G = np.zeros((L, n, n))
    xb = X0.copy()
    step = np.zeros(L, dtype=np.int64)
    active = scan.copy()
    while np.any(active):
        idx = np.flatnonzero(active)
        prevG, prevx = G[idx], xb[idx]
        g, xbb = _rk4_step(A, M, c, prevG, prevx, h[idx])
        G[idx], xb[idx] = g, xbb
        step[idx] += 1
        tt = step[idx] * h[idx]
        cst, dd = _gram_cost(g, xbb, X1[idx], tt)
        imp = cst < best_c[idx]
        sel = idx[imp]
        best_c[sel] = cst[imp]
        best_t[sel] = tt[imp]
        best_d[sel] = dd[imp]
        anchor_G[sel] = prevG[imp]
        anchor_x[sel] = prevx[imp]
        anchor_t[sel] = (step[sel] - 1) * h[sel]
        active[idx] = (tt < best_c[idx]) & (step[idx] < MAX_SCAN_STEPS)

    # refine: re-scan [tau_b - h, tau_b + h] at h / 10
    ok = np.flatnonzero(np.isfinite(best_c))
    if ok.size:
        hf = h[ok] / REFINE_DIVISIONS
        G, xb, tt = anchor_G[ok], anchor_x[ok], anchor_t[ok]
        for s in range(1, 2 * REFINE_DIVISIONS + 1):
            G, xb = _rk4_step(A, M, c, G, xb, hf)
            tcur = anchor_t[ok] + s * hf
            cst, dd = _gram_cost(G, xb, X1[ok], tcur)
            imp = cst < best_c[ok]
            sel = ok[imp]
            best_c[sel] = cst[imp]
            best_t[sel] = tcur[imp]
            best_d[sel] = dd[imp]

    tau_out[live] = np.where(np.isfinite(best_c), best_t, np.inf)
    cost_out[live] = best_c
    d_out[live] = best_d
    return tau_out, cost_out, d_out


def rk4_flow(H, hc, z_end, tau, nseg, substeps):
    """Integrate ``zdot = H z + hc`` backward from ``z(tau) = z_end``; rows at ``t = tau*s/nseg``."""
    Z = np.empty((nseg + 1, z_end.size))
    z = np.array(z_end, dtype=float)
    Z[nseg] = z
    h = -tau / (nseg * substeps)

    def f(v):
        return H @ v + hc

    for s in range(nseg - 1, -1, -1):
        for _ in range(substeps):
            k1 = f(z)
            k2 = f(z + 0.5 * h * k1)
            k3 = f(z + 0.5 * h * k2)
            k4 = f(z + h * k3)
            z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        Z[s] = z
    return Z


# -- collision checking ------------------------------------------------------


def _wrap(v):
    return np.mod(v + math.pi, 2.0 * math.pi) - math.pi


def samples_free(Z, Ku, slo, shi, wrap, clo, chi, pos, box_lo, box_hi, radius):
    """True iff every row of ``Z = (x, y)`` has free state and in-bound control ``Ku y``."""
    Z = np.asarray(Z, dtype=float)
    n = slo.size
    X = Z[:, :n].copy()
    if np.any(wrap):
        w = wrap.astype(bool)
        X[:, w] = _wrap(X[:, w])
    if not np.all((X >= slo) & (X <= shi)):
        return False
    U = Z[:, n:] @ Ku.T
    if not np.all((U >= clo) & (U <= chi)):
        return False
    if box_lo.shape[0]:
        P = Z[:, pos]
        gap = np.maximum(np.maximum(box_lo[None, :, :] - P[:, None, :], P[:, None, :] - box_hi[None, :, :]), 0.0)
        if np.any(np.einsum("sbk,sbk->sb", gap, gap) <= radius * radius):
            return False
    return True


def poly_states(V, tau, nseg):
    s = -tau + tau * np.arange(nseg + 1) / nseg
    s[-1] = 0.0
    Z = np.zeros((nseg + 1, V.shape[1]))
    for j in range(V.shape[0] - 1, -1, -1):
        Z = Z * s[:, None] + V[j]
    return Z


def poly_traj_free(V, tau, nseg, Ku, slo, shi, wrap, clo, chi, pos, box_lo, box_hi, radius):
    return samples_free(poly_states(V, tau, nseg), Ku, slo, shi, wrap, clo, chi, pos, box_lo, box_hi, radius)


def closed_edge_free(Gc, Ec, Cc, Hc, Hd, x0, x1, tau, nseg, Ku, slo, shi, wrap, clo, chi, pos, box_lo, box_hi, radius):
    """Sweep of the closed-form optimal edge ``x0 -> x1``: 1 free, 0 blocked, -1 rejected solve."""
    G = np.zeros(Gc.shape[1:])
    for k in range(Gc.shape[0] - 1, -1, -1):
        G = G * tau + Gc[k]
    xb = np.zeros(x0.size)
    for k in range(Ec.shape[0] - 1, -1, -1):
        xb = xb * tau + Ec[k] @ x0
    for k in range(Cc.shape[0] - 1, -1, -1):
        xb = xb + Cc[k] * tau**k
    cost, d = _gram_cost(G[None], xb[None], x1[None], np.array([0.0]))
    if not np.isfinite(cost[0]):
        return -1
    z_end = np.concatenate([x1, d[0]])
    V = np.array(Hd, dtype=float)
    V[: Hc.shape[0]] += Hc @ z_end
    free = samples_free(poly_states(V, tau, nseg), Ku, slo, shi, wrap, clo, chi, pos, box_lo, box_hi, radius)
    return 1 if free else 0
