"""Compiled vs numpy kernels on the hot paths of planning.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--batch 2000]

Each row times one kernel call pattern with both implementations and
reports the speedup. Results of the two implementations are also compared,
so the benchmark doubles as a coarse agreement check.
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from kinorrt import _backend
from kinorrt.scenarios import build
from kinorrt.steer import Steer, segment_count


def _time(fn, repeat: int) -> tuple[float, object]:
    best, out = math.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _states(env, k, rng):
    lo, hi = env.state_lower, env.state_upper
    X = rng.uniform(lo, hi, size=(k, lo.size))
    return X[env.states_free(X)]


def cases(batch: int, rng):
    """``(label, per-call count, fn(kernels) -> result)`` triples."""
    di = build("double_integrator")
    quad = build("quadrotor")
    out = []
    for sc in (di, quad):
        sys = sc.system
        X = _states(sc.environment, batch, rng)
        x = sc.goal
        st = {k: Steer(sys, "closed_form", kernels=k) for k in ("python", "compiled")}
        out.append(
            (
                f"{sc.name} closed-form costs",
                len(X),
                lambda k, st=st, X=X, x=x: st[k].costs_to(X, x)[1],
            )
        )
        Xs = X[: max(1, batch // 100)]
        st4 = {k: Steer(sys, "rk4", kernels=k) for k in ("python", "compiled")}
        out.append(
            (
                f"{sc.name} rk4 costs",
                len(Xs),
                lambda k, st=st4, X=Xs, x=x: st[k].costs_to(X, x)[1],
            )
        )
        ea = sc.environment.kernel_args
        tau, _, _ = st["compiled"].costs_to(X[:200], x)
        pairs = [(X[i], x, float(tau[i])) for i in range(len(tau)) if math.isfinite(tau[i]) and tau[i] > 0]

        def sweep(k, st=st, pairs=pairs, ea=ea):
            s = st[k]
            return np.array(
                [
                    s.kernels.closed_edge_free(s.cf, a, b, t, segment_count(t, max(t / 100, 1e-4)), s.Ku, ea)
                    for a, b, t in pairs
                ]
            )

        out.append((f"{sc.name} closed-form edge sweep", len(pairs), sweep))
    return out


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--batch", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if _backend.COMPILED is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(args.seed)
    print(f"{'case':42s} {'calls':>6s} {'python us':>11s} {'compiled us':>12s} {'speedup':>8s} {'max |diff|':>11s}")
    for label, count, fn in cases(args.batch, rng):
        tp, rp = _time(lambda: fn("python"), args.repeat)
        tc, rc = _time(lambda: fn("compiled"), args.repeat)
        rp, rc = np.asarray(rp, dtype=float), np.asarray(rc, dtype=float)
        fin = np.isfinite(rp) & np.isfinite(rc)
        diff = float(np.max(np.abs(rp[fin] - rc[fin]))) if fin.any() else 0.0
        print(
            f"{label:42s} {count:6d} {1e6 * tp / count:11.2f} {1e6 * tc / count:12.2f} "
            f"{tp / tc:8.1f} {diff:11.2e}"
        )


if __name__ == "__main__":
    main()
