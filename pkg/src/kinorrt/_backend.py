"""Kernel selection: compiled extension when importable, numpy fallback otherwise.

Set ``KINORRT_PURE_PYTHON=1`` to force the fallback. Both kernel sets are
wrapped behind :class:`KernelSet` so callers (and the benchmark) never touch
the raw modules.
"""

from __future__ import annotations

import os
from types import ModuleType

import numpy as np

from kinorrt import _pykernels


def _load_compiled() -> ModuleType | None:
    try:
        from kinorrt import _kernels
    except ImportError:
        return None
    return _kernels


class KernelSet:
    """Uniform facade over one kernel module."""

    def __init__(self, module: ModuleType):
        self.module = module
        self.compiled = bool(getattr(module, "COMPILED", False))
        self.name = "compiled" if self.compiled else "python"

    def closed_costs(self, cf, X, x, reverse: bool, tau_min: float):
        X = np.ascontiguousarray(X, dtype=float)
        x = np.ascontiguousarray(x, dtype=float)
        if self.compiled:
            tk, ti, tj, tv = cf.T_coo
            sk, si, sj, sv = cf.S_coo
            return self.module.closed_costs_sparse(
                tk, ti, tj, tv, cf.T.shape[0], sk, si, sj, sv, cf.S.shape[0], cf.dlt, X, x, bool(reverse), tau_min
            )
        return self.module.closed_costs(cf.T, cf.S, cf.dlt, X, x, reverse, tau_min)

    def rk4_costs(self, A, M, c, X, x, reverse: bool, tau_min: float, step_fraction: float):
        return self.module.rk4_costs(
            np.ascontiguousarray(A, dtype=float),
            np.ascontiguousarray(M, dtype=float),
            np.ascontiguousarray(c, dtype=float),
            np.ascontiguousarray(X, dtype=float),
            np.ascontiguousarray(x, dtype=float),
            bool(reverse),
            tau_min,
            step_fraction,
        )

    def rk4_flow(self, H, hc, z_end, tau: float, nseg: int, substeps: int):
        return self.module.rk4_flow(
            np.ascontiguousarray(H, dtype=float),
            np.ascontiguousarray(hc, dtype=float),
            np.ascontiguousarray(z_end, dtype=float),
            float(tau),
            int(nseg),
            int(substeps),
        )

    def closed_edge_free(self, cf, x0, x1, tau: float, nseg: int, Ku, env_args) -> int:
        return int(
            self.module.closed_edge_free(
                cf.gramian_coef,
                cf.exp_coef,
                cf.drift_c_coef,
                cf.composite_coef,
                cf.composite_drift,
                np.ascontiguousarray(x0, dtype=float),
                np.ascontiguousarray(x1, dtype=float),
                float(tau),
                int(nseg),
                Ku,
                *env_args,
            )
        )

    def poly_states(self, V, tau: float, nseg: int):
        return self.module.poly_states(np.ascontiguousarray(V, dtype=float), float(tau), int(nseg))

    def samples_free(self, Z, Ku, env_args) -> bool:
        return bool(self.module.samples_free(np.ascontiguousarray(Z, dtype=float), Ku, *env_args))

    def poly_traj_free(self, V, tau: float, nseg: int, Ku, env_args) -> bool:
        return bool(
            self.module.poly_traj_free(np.ascontiguousarray(V, dtype=float), float(tau), int(nseg), Ku, *env_args)
        )


_compiled = _load_compiled()

PYTHON = KernelSet(_pykernels)
COMPILED = KernelSet(_compiled) if _compiled is not None else None

if os.environ.get("KINORRT_PURE_PYTHON", "") not in ("", "0") or COMPILED is None:
    DEFAULT = PYTHON
else:
    DEFAULT = COMPILED


def get_kernels(name: str | None = None) -> KernelSet:
    """``"compiled"``, ``"python"`` or ``None`` for the import-time default."""
    if name is None:
        return DEFAULT
    if name == "python":
        return PYTHON
    if name == "compiled":
        if COMPILED is None:
            raise ImportError("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
        return COMPILED
    raise ValueError(f"unknown kernel set {name!r}")
