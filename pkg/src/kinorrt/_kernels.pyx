# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: batched steering costs, trajectory flow and collision sweeps.

Algorithms mirror ``_pykernels`` one for one, except that closed-form roots are
isolated by recursive derivative splitting with safeguarded Newton instead of
companion eigenvalues. Only sign changes of ``N`` from negative to positive
(the local minima of ``c``) are refined, which is all the minimizer needs.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, pow, fmod, ceil, INFINITY, M_PI
from libc.stdlib cimport malloc, free

cnp.import_array()

COMPILED = True

cdef double PILOT_H0 = 1e-3
cdef int PILOT_SUBSTEPS = 4
cdef double TAU_MAX = 1e6
cdef long MAX_SCAN_STEPS = 200000
cdef int REFINE_DIVISIONS = 10
cdef double COND_MAX = 1e12


# -- polynomial utilities ------------------------------------------------------

cdef inline double _horner(const double* a, int deg, double x) noexcept nogil:
    cdef double r = a[deg]
    cdef int k
    for k in range(deg - 1, -1, -1):
        r = r * x + a[k]
    return r


cdef inline void _horner2(const double* a, int deg, double x, double* f, double* df) noexcept nogil:
    cdef double r = a[deg]
    cdef double d = 0.0
    cdef int k
    for k in range(deg - 1, -1, -1):
        d = d * x + r
        r = r * x + a[k]
    f[0] = r
    df[0] = d


cdef double _refine(const double* a, int deg, double lo, double hi, double flo) noexcept nogil:
    """Root of ``a`` in ``(lo, hi)`` given a sign change; Newton guarded by bisection."""
    cdef double x = 0.5 * (lo + hi)
    cdef double f, df, xn
    cdef int it
    for it in range(200):
        _horner2(a, deg, x, &f, &df)
        if f == 0.0:
            return x
        if (f < 0.0) == (flo < 0.0):
            lo = x
            flo = f
        else:
            hi = x
        if df != 0.0:
            xn = x - f / df
        else:
            xn = lo - 1.0
        if not (xn > lo and xn < hi):
            xn = 0.5 * (lo + hi)
        if fabs(xn - x) <= 4e-16 * fabs(xn) or hi - lo <= 4e-16 * fabs(hi):
            return xn
        x = xn
    return x


cdef int _minima(const double* a, int deg, double lo, double* ws, double* out) noexcept nogil:
    """Sign changes of ``a`` from negative to positive inside ``(lo, bound)``.

    ``ws`` needs ``(deg + 1) * (deg + 2) / 2 + 2 * (deg + 2)`` doubles. Roots of
    each derivative partition the axis for the one below it, so every interval
    handed to ``_refine`` holds at most one root.
    """
    cdef int l, i, k, ncrit, nnew, off
    cdef double bound, v, fu, fv, u, w, r
    cdef double* ders = ws
    cdef double* crit = ws + (deg + 1) * (deg + 2) // 2
    cdef double* nxt = crit + deg + 2
    cdef double* tmp
    cdef double* p
    cdef double* q
    if deg < 1:
        return 0
    # Fujiwara bound on root magnitudes
    bound = 0.0
    for k in range(deg):
        if a[k] == 0.0:
            continue
        v = fabs(a[k] / a[deg])
        if k == 0:
            v = v * 0.5
        v = pow(v, 1.0 / (deg - k))
        if v > bound:
            bound = v
    bound = 2.0 * bound * (1.0 + 1e-12) + 1e-300
    if bound <= lo:
        return 0
    # derivative l stored at offset sum_{j<l}(deg - j + 1)
    off = 0
    for i in range(deg + 1):
        ders[i] = a[i]
    for l in range(1, deg):
        p = ders + off
        off += deg - l + 2
        q = ders + off
        for i in range(deg - l + 1):
            q[i] = p[i + 1] * (i + 1)
    # deepest derivative is linear
    ncrit = 0
    q = ders + off
    if deg - 1 >= 1:
        r = -q[0] / q[1]
        if r > lo and r < bound:
            crit[0] = r
            ncrit = 1
    for l in range(deg - 2, -1, -1):
        off -= deg - l + 1
        p = ders + off
        nnew = 0
        u = lo
        fu = _horner(p, deg - l, u)
        for i in range(ncrit + 1):
            w = crit[i] if i < ncrit else bound
            fv = _horner(p, deg - l, w)
            if (fu < 0.0 and fv > 0.0) or (l > 0 and fu > 0.0 and fv < 0.0):
                nxt[nnew] = _refine(p, deg - l, u, w, fu)
                nnew += 1
            u = w
            fu = fv
        tmp = crit
        crit = nxt
        nxt = tmp
        ncrit = nnew
    if deg == 1:
        r = -a[0] / a[1]
        if a[1] > 0.0 and r > lo:
            out[0] = r
            return 1
        return 0
    for i in range(ncrit):
        out[i] = crit[i]
    return ncrit


cdef inline double _sparse_form(const long* ki, const long* ii, const long* ji, const double* vv, long nnz,
                                const double* z, double* out, int K) noexcept nogil:
    cdef long e
    cdef int k
    for k in range(K):
        out[k] = 0.0
    for e in range(nnz):
        out[ki[e]] += vv[e] * z[ii[e]] * z[ji[e]]
    return 0.0


def closed_costs_sparse(const long[::1] tk, const long[::1] ti, const long[::1] tj, const double[::1] tv, int KT,
                        const long[::1] sk, const long[::1] si, const long[::1] sj, const double[::1] sv, int KS,
                        const double[::1] dlt, const double[:, ::1] X, const double[::1] x, bint reverse, double tau_min):
    """Optimal ``(tau*, c*)`` per query; tensors given as symmetric-folded COO lists."""
    cdef Py_ssize_t N = X.shape[0]
    cdef int n = X.shape[1]
    cdef int p = 2 * n + 1
    cdef int deg0 = KT - 1
    tau_np = np.full(N, INFINITY)
    cost_np = np.full(N, INFINITY)
    cdef double[::1] tau = tau_np
    cdef double[::1] cost = cost_np
    cdef double* z = <double*>malloc(p * sizeof(double))
    cdef double* a = <double*>malloc((KT + 1) * sizeof(double))
    cdef double* qc = <double*>malloc((KS + 1) * sizeof(double))
    cdef double* roots = <double*>malloc((KT + 1) * sizeof(double))
    cdef double* ws = <double*>malloc(((KT + 1) * (KT + 2) // 2 + 2 * (KT + 2)) * sizeof(double))
    cdef Py_ssize_t r
    cdef int i, k, lo, deg, nr, Kd = dlt.shape[0]
    cdef bint same, boundary
    cdef double best_c, best_t, t, den, c
    try:
        with nogil:
            for r in range(N):
                same = True
                for i in range(n):
                    # z = (x0, x1 - x0, 1)
                    if reverse:
                        z[i] = x[i]
                        z[n + i] = X[r, i] - x[i]
                    else:
                        z[i] = X[r, i]
                        z[n + i] = x[i] - X[r, i]
                    if z[n + i] != 0.0:
                        same = False
                z[2 * n] = 1.0
                if same:
                    tau[r] = 0.0
                    cost[r] = 0.0
                    continue
                _sparse_form(&tk[0], &ti[0], &tj[0], &tv[0], tk.shape[0], z, a, KT)
                # strip zero trailing/leading coefficients for this query
                lo = 0
                while lo < KT and a[lo] == 0.0:
                    lo += 1
                deg = deg0
                while deg > lo and a[deg] == 0.0:
                    deg -= 1
                if lo == KT:
                    continue
                # tau_min is a candidate when the cost is increasing there (optimum below the domain)
                boundary = _horner(a + lo, deg - lo, tau_min) > 0.0
                nr = _minima(a + lo, deg - lo, tau_min, ws, roots) if deg > lo else 0
                if nr == 0 and not boundary:
                    continue
                _sparse_form(&sk[0], &si[0], &sj[0], &sv[0], sk.shape[0], z, qc, KS)
                best_c = INFINITY
                best_t = INFINITY
                if boundary:
                    den = _horner(&dlt[0], Kd - 1, tau_min)
                    if den > 0.0:
                        c = tau_min + _horner(qc, KS - 1, tau_min) / den
                        if c == c and c < INFINITY:
                            best_c = c
                            best_t = tau_min
                for i in range(nr):
                    t = roots[i]
                    den = _horner(&dlt[0], Kd - 1, t)
                    if not (den > 0.0):
                        continue
                    c = t + _horner(qc, KS - 1, t) / den
                    if c < best_c:
                        best_c = c
                        best_t = t
                tau[r] = best_t
                cost[r] = best_c
    finally:
        free(z)
        free(a)
        free(qc)
        free(roots)
        free(ws)
    return tau_np, cost_np


def poly_minima(const double[::1] a, double lo):
    """Roots of ``a`` above ``lo`` where it turns from negative to positive (exposed for tests)."""
    cdef int deg = a.shape[0] - 1
    while deg > 0 and a[deg] == 0.0:
        deg -= 1
    if deg < 1:
        return np.empty(0)
    b_np = np.array(a[: deg + 1])
    cdef double[::1] b = b_np
    out_np = np.empty(deg)
    cdef double[::1] out = out_np
    cdef double* ws = <double*>malloc(((deg + 1) * (deg + 2) // 2 + 2 * (deg + 2)) * sizeof(double))
    cdef int nr
    try:
        nr = _minima(&b[0], deg, lo, ws, &out[0])
    finally:
        free(ws)
    return out_np[:nr]


# -- rk4 -----------------------------------------------------------------------

cdef struct Rk4Work:
    int n
    double* G
    double* xb
    double* k
    double* l
    double* Gt
    double* xt
    double* acc
    double* accx
    double* P
    double* Ls
    double* s
    double* v


cdef void _rhs(const double* A, const double* M, const double* c, int n,
               const double* G, const double* xb, double* fG, double* fx, double* P) noexcept nogil:
    cdef int i, j, t
    cdef double acc
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for t in range(n):
                acc += A[i * n + t] * G[t * n + j]
            P[i * n + j] = acc
    for i in range(n):
        for j in range(n):
            fG[i * n + j] = P[i * n + j] + P[j * n + i] + M[i * n + j]
        acc = c[i]
        for t in range(n):
            acc += A[i * n + t] * xb[t]
        fx[i] = acc


cdef void _rk4_step(const double* A, const double* M, const double* c, Rk4Work* w, double h) noexcept nogil:
    cdef int n = w.n, nn = w.n * w.n, i, st
    cdef double wt, sc
    for i in range(nn):
        w.acc[i] = 0.0
    for i in range(n):
        w.accx[i] = 0.0
    for st in range(4):
        if st == 0:
            _rhs(A, M, c, n, w.G, w.xb, w.k, w.l, w.P)
        else:
            sc = h if st == 3 else 0.5 * h
            for i in range(nn):
                w.Gt[i] = w.G[i] + sc * w.k[i]
            for i in range(n):
                w.xt[i] = w.xb[i] + sc * w.l[i]
            _rhs(A, M, c, n, w.Gt, w.xt, w.k, w.l, w.P)
        wt = 1.0 if (st == 0 or st == 3) else 2.0
        for i in range(nn):
            w.acc[i] += wt * w.k[i]
        for i in range(n):
            w.accx[i] += wt * w.l[i]
    for i in range(nn):
        w.G[i] += h / 6.0 * w.acc[i]
    for i in range(n):
        w.xb[i] += h / 6.0 * w.accx[i]


cdef int _chol_solve(const double* G, int n, const double* rhs, double* d, double* L, double* s, double* v) noexcept nogil:
    """``d = G^-1 rhs`` via Cholesky of the equilibrated ``G``; 0 on success, -1 if rejected."""
    cdef int i, j, t
    cdef double acc, mx, mn
    for i in range(n):
        if not (G[i * n + i] > 0.0):
            return -1
        s[i] = 1.0 / sqrt(G[i * n + i])
    for i in range(n):
        for j in range(i + 1):
            acc = G[i * n + j] * s[i] * s[j]
            for t in range(j):
                acc -= L[i * n + t] * L[j * n + t]
            if i == j:
                if not (acc > 0.0):
                    return -1
                L[i * n + i] = sqrt(acc)
            else:
                L[i * n + j] = acc / L[j * n + j]
    mx = L[0]
    mn = L[0]
    for i in range(1, n):
        if L[i * n + i] > mx:
            mx = L[i * n + i]
        if L[i * n + i] < mn:
            mn = L[i * n + i]
    if (mx / mn) * (mx / mn) > COND_MAX:
        return -1
    for i in range(n):
        acc = s[i] * rhs[i]
        for t in range(i):
            acc -= L[i * n + t] * v[t]
        v[i] = acc / L[i * n + i]
    for i in range(n - 1, -1, -1):
        acc = v[i]
        for t in range(i + 1, n):
            acc -= L[t * n + i] * v[t]
        v[i] = acc / L[i * n + i]
    for i in range(n):
        d[i] = s[i] * v[i]
    return 0


cdef double _gram_cost(Rk4Work* w, const double* x1, double tau, double* d) noexcept nogil:
    """``tau + delta^T G^-1 delta`` with a condition guard; ``inf`` when rejected."""
    cdef int n = w.n, i
    cdef double q = 0.0
    for i in range(n):
        w.xt[i] = x1[i] - w.xb[i]
    if _chol_solve(w.G, n, w.xt, d, w.Ls, w.s, w.v) != 0:
        return INFINITY
    for i in range(n):
        q += w.xt[i] * d[i]
    return tau + q


def rk4_costs(const double[:, ::1] A, const double[:, ::1] M, const double[::1] c, const double[:, ::1] X, const double[::1] x,
              bint reverse, double tau_min, double step_fraction):
    """Optimal ``(tau*, c*, d*)`` per query by forward RK4 scanning of ``c(tau)``."""
    cdef Py_ssize_t N = X.shape[0]
    cdef int n = X.shape[1], nn = n * n
    tau_np = np.full(N, INFINITY)
    cost_np = np.full(N, INFINITY)
    d_np = np.zeros((N, n))
    cdef double[::1] tau_o = tau_np
    cdef double[::1] cost_o = cost_np
    cdef double[:, ::1] d_o = d_np
    cdef double* buf = <double*>malloc((9 * nn + 12 * n) * sizeof(double))
    cdef Rk4Work w
    w.n = n
    w.G = buf
    w.k = buf + nn
    w.Gt = buf + 2 * nn
    w.acc = buf + 3 * nn
    w.P = buf + 4 * nn
    w.Ls = buf + 5 * nn
    cdef double* aG = buf + 6 * nn
    cdef double* bG = buf + 7 * nn
    cdef double* eG = buf + 8 * nn
    w.xb = buf + 9 * nn
    w.l = w.xb + n
    w.xt = w.xb + 2 * n
    w.accx = w.xb + 3 * n
    w.s = w.xb + 4 * n
    w.v = w.xb + 5 * n
    cdef double* x0 = w.xb + 6 * n
    cdef double* x1 = w.xb + 7 * n
    cdef double* dd = w.xb + 8 * n
    cdef double* bd = w.xb + 9 * n
    cdef double* ax = w.xb + 10 * n
    cdef double* bx = w.xb + 11 * n
    cdef Py_ssize_t r
    cdef int i, s
    cdef long step
    cdef bint same
    cdef double t, span, c_up, cst, h, best_c, best_t, at, hf
    try:
        with nogil:
            for r in range(N):
                same = True
                for i in range(n):
                    if reverse:
                        x0[i] = x[i]
                        x1[i] = X[r, i]
                    else:
                        x0[i] = X[r, i]
                        x1[i] = x[i]
                    if x0[i] != x1[i]:
                        same = False
                if same:
                    tau_o[r] = 0.0
                    cost_o[r] = 0.0
                    continue
                # pilot
                for i in range(nn):
                    w.G[i] = 0.0
                for i in range(n):
                    w.xb[i] = x0[i]
                t = 0.0
                c_up = INFINITY
                while True:
                    span = t if t > PILOT_H0 else PILOT_H0
                    for s in range(PILOT_SUBSTEPS):
                        _rk4_step(&A[0, 0], &M[0, 0], &c[0], &w, span / PILOT_SUBSTEPS)
                    t += span
                    cst = _gram_cost(&w, x1, t, dd)
                    if cst < c_up:
                        c_up = cst
                    if not (t < c_up and t < TAU_MAX):
                        break
                if not (c_up < INFINITY):
                    continue
                h = step_fraction * c_up
                # main scan
                for i in range(nn):
                    w.G[i] = 0.0
                for i in range(n):
                    w.xb[i] = x0[i]
                best_c = INFINITY
                best_t = 0.0
                at = 0.0
                for i in range(nn):
                    aG[i] = 0.0
                for i in range(n):
                    ax[i] = x0[i]
                step = 0
                while True:
                    for i in range(nn):
                        eG[i] = w.G[i]
                    for i in range(n):
                        bx[i] = w.xb[i]
                    _rk4_step(&A[0, 0], &M[0, 0], &c[0], &w, h)
                    step += 1
                    t = step * h
                    cst = _gram_cost(&w, x1, t, dd)
                    if cst < best_c:
                        best_c = cst
                        best_t = t
                        for i in range(n):
                            bd[i] = dd[i]
                            ax[i] = bx[i]
                        for i in range(nn):
                            aG[i] = eG[i]
                        at = (step - 1) * h
                    if not (t < best_c and step < MAX_SCAN_STEPS):
                        break
                if not (best_c < INFINITY):
                    continue
                # refine
                hf = h / REFINE_DIVISIONS
                for i in range(nn):
                    w.G[i] = aG[i]
                for i in range(n):
                    w.xb[i] = ax[i]
                for s in range(1, 2 * REFINE_DIVISIONS + 1):
                    _rk4_step(&A[0, 0], &M[0, 0], &c[0], &w, hf)
                    t = at + s * hf
                    cst = _gram_cost(&w, x1, t, dd)
                    if cst < best_c:
                        best_c = cst
                        best_t = t
                        for i in range(n):
                            bd[i] = dd[i]
                tau_o[r] = best_t
                cost_o[r] = best_c
                for i in range(n):
                    d_o[r, i] = bd[i]
    finally:
        free(buf)
    return tau_np, cost_np, d_np


def rk4_flow(const double[:, ::1] H, const double[::1] hc, const double[::1] z_end, double tau, int nseg, int substeps):
    """Integrate ``zdot = H z + hc`` backward from ``z(tau) = z_end``; rows at ``t = tau*s/nseg``."""
    cdef int p = z_end.shape[0], i, j, s, sub, st
    Z_np = np.empty((nseg + 1, p))
    cdef double[:, ::1] Z = Z_np
    cdef double* buf = <double*>malloc(4 * p * sizeof(double))
    cdef double* z = buf
    cdef double* zt = buf + p
    cdef double* k = buf + 2 * p
    cdef double* acc = buf + 3 * p
    cdef double h = -tau / (nseg * substeps), sc, wt, v
    try:
        with nogil:
            for i in range(p):
                z[i] = z_end[i]
                Z[nseg, i] = z[i]
            for s in range(nseg - 1, -1, -1):
                for sub in range(substeps):
                    for i in range(p):
                        acc[i] = 0.0
                    for st in range(4):
                        if st == 0:
                            for i in range(p):
                                zt[i] = z[i]
                        else:
                            sc = h if st == 3 else 0.5 * h
                            for i in range(p):
                                zt[i] = z[i] + sc * k[i]
                        for i in range(p):
                            v = hc[i]
                            for j in range(p):
                                v += H[i, j] * zt[j]
                            k[i] = v
                        wt = 1.0 if (st == 0 or st == 3) else 2.0
                        for i in range(p):
                            acc[i] += wt * k[i]
                    for i in range(p):
                        z[i] += h / 6.0 * acc[i]
                for i in range(p):
                    Z[s, i] = z[i]
    finally:
        free(buf)
    return Z_np


# -- collision checking --------------------------------------------------------

cdef struct Env:
    int n
    int m
    int k
    int nb
    const double* slo
    const double* shi
    const signed char* wrap
    const double* clo
    const double* chi
    const long* pos
    const double* blo
    const double* bhi
    double r2
    const double* Ku


cdef bint _row_free(Env* e, const double* z) noexcept nogil:
    cdef int i, j, b
    cdef double v, g, d2
    for i in range(e.n):
        v = z[i]
        if e.wrap[i]:
            v = fmod(v + M_PI, 2.0 * M_PI)
            if v < 0.0:
                v += 2.0 * M_PI
            v -= M_PI
        if not (v >= e.slo[i] and v <= e.shi[i]):
            return False
    for i in range(e.m):
        v = 0.0
        for j in range(e.n):
            v += e.Ku[i * e.n + j] * z[e.n + j]
        if not (v >= e.clo[i] and v <= e.chi[i]):
            return False
    for b in range(e.nb):
        d2 = 0.0
        for j in range(e.k):
            v = z[e.pos[j]]
            g = e.blo[b * e.k + j] - v
            if v - e.bhi[b * e.k + j] > g:
                g = v - e.bhi[b * e.k + j]
            if g > 0.0:
                d2 += g * g
        if d2 <= e.r2:
            return False
    return True


cdef Env _make_env(const double[:, ::1] Ku, const double[::1] slo, const double[::1] shi, const signed char[::1] wrap,
                   const double[::1] clo, const double[::1] chi, const long[::1] pos, const double[:, ::1] box_lo,
                   const double[:, ::1] box_hi, double radius):
    cdef Env e
    e.n = slo.shape[0]
    e.m = clo.shape[0]
    e.k = pos.shape[0]
    e.nb = box_lo.shape[0]
    e.slo = &slo[0]
    e.shi = &shi[0]
    e.wrap = &wrap[0]
    e.clo = &clo[0] if e.m else NULL
    e.chi = &chi[0] if e.m else NULL
    e.pos = &pos[0] if e.k else NULL
    e.blo = &box_lo[0, 0] if e.nb else NULL
    e.bhi = &box_hi[0, 0] if e.nb else NULL
    e.r2 = radius * radius
    e.Ku = &Ku[0, 0]
    return e


def samples_free(const double[:, ::1] Z, const double[:, ::1] Ku, const double[::1] slo, const double[::1] shi, const signed char[::1] wrap,
                 const double[::1] clo, const double[::1] chi, const long[::1] pos, const double[:, ::1] box_lo,
                 const double[:, ::1] box_hi, double radius):
    """True iff every row of ``Z = (x, y)`` has free state and in-bound control ``Ku y``."""
    cdef Env e = _make_env(Ku, slo, shi, wrap, clo, chi, pos, box_lo, box_hi, radius)
    cdef Py_ssize_t s
    cdef bint ok = True
    with nogil:
        for s in range(Z.shape[0]):
            if not _row_free(&e, &Z[s, 0]):
                ok = False
                break
    return ok


def poly_traj_free(const double[:, ::1] V, double tau, int nseg, const double[:, ::1] Ku, const double[::1] slo, const double[::1] shi,
                   const signed char[::1] wrap, const double[::1] clo, const double[::1] chi, const long[::1] pos,
                   const double[:, ::1] box_lo, const double[:, ::1] box_hi, double radius):
    """Collision sweep of the polynomial trajectory ``(x, y)(tau + s) = sum_j V[j] s^j``."""
    cdef Env e = _make_env(Ku, slo, shi, wrap, clo, chi, pos, box_lo, box_hi, radius)
    cdef int J = V.shape[0], p = V.shape[1], i, j, s
    cdef double sig
    cdef double* z = <double*>malloc(p * sizeof(double))
    cdef bint ok = True
    try:
        with nogil:
            for s in range(nseg + 1):
                sig = -tau + tau * s / nseg if s < nseg else 0.0
                for i in range(p):
                    z[i] = V[J - 1, i]
                for j in range(J - 2, -1, -1):
                    for i in range(p):
                        z[i] = z[i] * sig + V[j, i]
                if not _row_free(&e, z):
                    ok = False
                    break
    finally:
        free(z)
    return ok


def closed_edge_free(const double[:, :, ::1] Gc, const double[:, :, ::1] Ec, const double[:, ::1] Cc,
                     const double[:, :, ::1] Hc, const double[:, ::1] Hd, const double[::1] x0,
                     const double[::1] x1, double tau, int nseg, const double[:, ::1] Ku, const double[::1] slo,
                     const double[::1] shi, const signed char[::1] wrap, const double[::1] clo,
                     const double[::1] chi, const long[::1] pos, const double[:, ::1] box_lo,
                     const double[:, ::1] box_hi, double radius):
    """Sweep of the closed-form optimal edge ``x0 -> x1`` arriving at ``tau``.

    Returns 1 if free, 0 if a sample collides or leaves the bounds, -1 if the
    Gramian solve for the final costate is rejected.
    """
    cdef Env e = _make_env(Ku, slo, shi, wrap, clo, chi, pos, box_lo, box_hi, radius)
    cdef int n = x0.shape[0], p = 2 * n, KG = Gc.shape[0], KE = Ec.shape[0], KC = Cc.shape[0]
    cdef int J = Hc.shape[0], i, j, k, s, status = 1
    cdef double sig
    cdef double* buf = <double*>malloc((2 * n * n + 6 * n + (J + 1) * p + 2 * p) * sizeof(double))
    cdef double* G = buf
    cdef double* L = buf + n * n
    cdef double* sc = L + n * n
    cdef double* v = sc + n
    cdef double* delta = v + n
    cdef double* zend = delta + n  # length p
    cdef double* V = zend + p      # (J + 1) x p
    cdef double* z = V + (J + 1) * p
    try:
        with nogil:
            for i in range(n * n):
                G[i] = Gc[KG - 1, i // n, i % n]
            for k in range(KG - 2, -1, -1):
                for i in range(n * n):
                    G[i] = G[i] * tau + Gc[k, i // n, i % n]
            for i in range(n):
                delta[i] = Cc[KC - 1, i]
            for k in range(KC - 2, -1, -1):
                for i in range(n):
                    delta[i] = delta[i] * tau + Cc[k, i]
            for k in range(KE - 1, -1, -1):
                for i in range(n):
                    sig = 0.0
                    for j in range(n):
                        sig += Ec[k, i, j] * x0[j]
                    v[i] = sig
                # accumulate exp(A tau) x0 by Horner in z[0:n]
                for i in range(n):
                    z[i] = (z[i] * tau if k < KE - 1 else 0.0) + v[i]
            for i in range(n):
                delta[i] = x1[i] - (delta[i] + z[i])
                zend[i] = x1[i]
            if _chol_solve(G, n, delta, zend + n, L, sc, v) != 0:
                status = -1
            else:
                for j in range(J + 1):
                    for i in range(p):
                        V[j * p + i] = Hd[j, i]
                for j in range(J):
                    for i in range(p):
                        sig = 0.0
                        for k in range(p):
                            sig += Hc[j, i, k] * zend[k]
                        V[j * p + i] += sig
                for s in range(nseg + 1):
                    sig = -tau + tau * s / nseg if s < nseg else 0.0
                    for i in range(p):
                        z[i] = V[J * p + i]
                    for j in range(J - 1, -1, -1):
                        for i in range(p):
                            z[i] = z[i] * sig + V[j * p + i]
                    if not _row_free(&e, z):
                        status = 0
                        break
    finally:
        free(buf)
    return status


def poly_states(const double[:, ::1] V, double tau, int nseg):
    cdef int J = V.shape[0], p = V.shape[1], i, j, s
    Z_np = np.empty((nseg + 1, p))
    cdef double[:, ::1] Z = Z_np
    cdef double sig
    with nogil:
        for s in range(nseg + 1):
            sig = -tau + tau * s / nseg if s < nseg else 0.0
            for i in range(p):
                Z[s, i] = V[J - 1, i]
            for j in range(J - 2, -1, -1):
                for i in range(p):
                    Z[s, i] = Z[s, i] * sig + V[j, i]
    return Z_np
