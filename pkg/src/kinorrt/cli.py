"""Command-line front end.

Commands
--------
``plan``    grow the tree on a scenario, write solution/convergence/timing CSVs
``steer``   one optimal connection, optionally with both backends
``bench``   wall time per node count for the closed-form and rk4 backends
``render``  SVG projection of a trajectory CSV over the scenario obstacles
``replay``  re-run a ``plan`` from its ``manifest.json``

Exit codes: 0 success, 1 configuration error, 2 numerical failure.

Every numeric CSV field is written with 17 significant digits, so files parse
back to the identical doubles. Wall-clock data lives only in ``timing.csv``
and ``manifest.json``; all other outputs are byte-identical across runs with
the same manifest.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from kinorrt import __version__
from kinorrt._backend import get_kernels
from kinorrt.dynamics import nilpotency
from kinorrt.errors import ConfigurationError, KinoRRTError, NumericalError
from kinorrt.planner import PlannerConfig, plan
from kinorrt.scenarios import BUNDLED, Scenario, bundled_path, load
from kinorrt.steer import Steer, Trajectory
from kinorrt.world import Box, Environment

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2

DEFAULT_NODE_COUNTS = (1000, 2000, 3000, 4000, 5000)
BACKEND_CHOICES = ("closed", "rk4", "both")


class _Parser(argparse.ArgumentParser):
    """Argument errors are configuration errors (exit 1), not argparse's 2."""

    def error(self, message):
        raise ConfigurationError(f"{self.prog}: {message}")


# -- value parsing -------------------------------------------------------------


def parse_float(text: str) -> float:
    """Float including ``inf``; rejects ``nan``."""
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if math.isnan(v):
        raise argparse.ArgumentTypeError("nan is not allowed")
    return v


def parse_vector(text: str) -> np.ndarray:
    """Comma- or space-separated floats."""
    parts = [p for p in text.replace(",", " ").split() if p]
    if not parts:
        raise argparse.ArgumentTypeError("empty state vector")
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a numeric vector: {text!r}") from None


def parse_ints(text: str) -> list[int]:
    try:
        vals = [int(p) for p in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of integers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _backend_name(flag: str) -> str:
    return "closed_form" if flag == "closed" else flag


# -- CSV -----------------------------------------------------------------------


def fmt(v: float) -> str:
    """17 significant digits: lossless for IEEE doubles."""
    return format(float(v), ".17g")


def trajectory_header(n: int, m: int) -> list[str]:
    return ["t"] + [f"x_{i}" for i in range(n)] + [f"u_{j}" for j in range(m)]


def trajectory_csv(traj: Trajectory | None, n: int, m: int) -> str:
    """Header plus one row per sample; ``None`` or a single-sample trajectory gives the header only."""
    rows = []
    if traj is not None and len(traj) > 1:
        rows = np.column_stack([traj.t, traj.x, traj.u])
    return _csv(trajectory_header(n, m), rows)


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def read_trajectory_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and ``(samples, columns)`` array; a header-only file gives zero rows."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}") from None
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ConfigurationError(f"{path}: missing header row") from None
    if not header or header[0] != "t":
        raise ConfigurationError(f"{path}: header must start with 't'")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise ConfigurationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            rows.append([float(v) for v in row])
        except ValueError:
            raise ConfigurationError(f"{path}:{lineno}: non-numeric field") from None
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


# -- SVG -----------------------------------------------------------------------


def _extent(env: Environment, dims: tuple[int, int], pts: np.ndarray):
    lo = env.state_lower[list(dims)].copy()
    hi = env.state_upper[list(dims)].copy()
    for k in range(2):
        if not (math.isfinite(lo[k]) and math.isfinite(hi[k])):
            vals = [pts[:, k]] if pts.size else []
            vals += [[b.lower[k], b.upper[k]] for b in _boxes_2d(env, dims)]
            vals = np.concatenate([np.ravel(v) for v in vals]) if vals else np.array([0.0, 1.0])
            lo[k], hi[k] = float(vals.min()), float(vals.max())
        if hi[k] <= lo[k]:
            lo[k], hi[k] = lo[k] - 0.5, hi[k] + 0.5
    return lo, hi


def _boxes_2d(env: Environment, dims: tuple[int, int]):
    """Obstacles projected onto ``dims`` when both are position coordinates."""
    pos = list(env.position_dims)
    if not all(d in pos for d in dims):
        return []
    idx = [pos.index(d) for d in dims]
    return [Box(b.lower[idx], b.upper[idx]) for b in env.obstacles]


def svg_transform(lo, hi, width: float, height: float, margin: float):
    """Map state coordinates to SVG pixels (y up in state space, down on screen)."""
    sx = (width - 2 * margin) / (hi[0] - lo[0])
    sy = (height - 2 * margin) / (hi[1] - lo[1])

    def f(p):
        p = np.asarray(p, dtype=float)
        return np.stack([margin + (p[..., 0] - lo[0]) * sx, height - margin - (p[..., 1] - lo[1]) * sy], -1)

    return f


def render_projection(
    states: np.ndarray, env: Environment, dims: tuple[int, int] = (0, 1), width: int = 800, margin: int = 10
) -> str:
    """SVG polyline of ``states[:, dims]`` with obstacle rectangles.

    ``states`` may be empty, in which case only the obstacles are drawn.
    """
    states = np.asarray(states, dtype=float).reshape(-1, env.n)
    if len(dims) != 2 or not all(0 <= d < env.n for d in dims):
        raise ConfigurationError(f"projection dims {tuple(dims)} out of range for a {env.n}-dimensional state")
    pts = states[:, list(dims)]
    lo, hi = _extent(env, dims, pts)
    height = int(round(margin * 2 + (width - 2 * margin) * (hi[1] - lo[1]) / (hi[0] - lo[0])))
    height = min(max(height, 100), 4 * width)
    to_px = svg_transform(lo, hi, width, height, margin)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white" stroke="none"/>',
    ]
    for b in _boxes_2d(env, dims):
        (x0, y1), (x1, y0) = to_px([b.lower[0], b.lower[1]]), to_px([b.upper[0], b.upper[1]])
        out.append(
            f'<rect class="obstacle" x="{x0:.3f}" y="{y0:.3f}" width="{x1 - x0:.3f}" height="{y1 - y0:.3f}" '
            'fill="#888888" stroke="none"/>'
        )
    if len(pts) >= 2:
        px = to_px(pts)
        coords = " ".join(f"{x:.3f},{y:.3f}" for x, y in px)
        out.append(f'<polyline class="trajectory" points="{coords}" fill="none" stroke="#c00000" stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# -- shared helpers ------------------------------------------------------------


def _load_scenario(spec: str) -> tuple[Scenario, str]:
    """Scenario plus its resolved source (absolute file path or bundled name)."""
    p = Path(spec)
    source = str(p.resolve()) if p.exists() else spec
    if not p.exists() and spec not in BUNDLED:
        raise ConfigurationError(f"scenario {spec!r} is neither a file nor a bundled name ({', '.join(BUNDLED)})")
    return load(spec), source


def _scenario_digest(source: str) -> str:
    p = Path(source)
    if not p.exists():
        p = bundled_path(source)
    return hashlib.sha256(p.read_bytes()).hexdigest()


def _out_dir(path: str | None, default: str) -> Path:
    d = Path(path if path is not None else default)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="")


def _overrides(args) -> dict:
    out = {}
    for key in ("seed", "iterations", "backend", "radius", "sample_dt", "kernels"):
        v = getattr(args, key, None)
        if v is not None:
            out[key] = "inf" if isinstance(v, float) and math.isinf(v) else v
    return out


def apply_overrides(cfg: PlannerConfig, ov: dict) -> PlannerConfig:
    """Planner config with command-line overrides (``radius`` disables a gamma schedule)."""
    kw = {}
    if "seed" in ov:
        kw["seed"] = int(ov["seed"])
    if "iterations" in ov:
        kw["max_iterations"] = int(ov["iterations"])
    if "backend" in ov:
        if ov["backend"] == "both":
            raise ConfigurationError("plan runs one backend; use 'closed' or 'rk4' (bench compares both)")
        kw["backend"] = _backend_name(ov["backend"])
    if "radius" in ov:
        kw.update(radius=float(ov["radius"]), gamma=None, dimension=None)
    if "sample_dt" in ov:
        kw["sample_dt"] = float(ov["sample_dt"])
    if "kernels" in ov:
        kw["kernels"] = ov["kernels"]
    return replace(cfg, **kw)


def _manifest(command: str, source: str, ov: dict, out: Path, cfg: PlannerConfig | None, extra: dict) -> dict:
    return {
        "command": command,
        "scenario": source,
        "scenario_sha256": _scenario_digest(source),
        "seed": None if cfg is None else cfg.seed,
        "overrides": ov,
        "output_directory": str(out.resolve()),
        "tool_version": __version__,
        "kernels": get_kernels(None if cfg is None else cfg.kernels).name,
        "wall_clock": extra,
    }


# -- commands ------------------------------------------------------------------


def cmd_plan(args) -> int:
    scenario, source = _load_scenario(args.scenario)
    ov = _overrides(args)
    return _run_plan(scenario, source, ov, args.out, args.svg, args.dims)


def _run_plan(scenario: Scenario, source: str, ov: dict, out_arg, svg: bool, dims) -> int:
    cfg = apply_overrides(scenario.planner, ov)
    out = _out_dir(out_arg, "kinorrt-plan")
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    result = plan(scenario.system, scenario.environment, scenario.start, scenario.goal, cfg)
    n, m = scenario.system.n, scenario.system.m

    _write(out / "solution.csv", trajectory_csv(result.solution, n, m))
    h = result.history
    conv = [(int(r[0]), int(r[1]), float(r[2])) for r in h]
    _write(out / "convergence.csv", _csv(["iteration", "nodes", "best_cost"], conv))
    timing = [(int(r[0]), int(r[1]), float(r[3])) for r in h]
    _write(out / "timing.csv", _csv(["iteration", "nodes", "wall_time_s"], timing))
    if svg:
        states = result.solution.x if result.solution is not None else np.zeros((0, n))
        _write(out / "solution.svg", render_projection(states, scenario.environment, tuple(dims or _default_dims(scenario))))
    meta = {
        "started_utc": started,
        "planning_wall_time_s": result.wall_time,
        "total_wall_time_s": time.perf_counter() - t0,
    }
    man = _manifest("plan", source, ov, out, cfg, meta)
    man["svg"] = bool(svg)
    man["dims"] = list(dims) if dims else None
    _write(out / "manifest.json", json.dumps(man, indent=2) + "\n")

    if result.solution is None:
        print(f"no solution after {result.iterations} iterations ({len(result.tree)} nodes)")
    else:
        print(
            f"best cost {fmt(result.best_cost)} after {result.iterations} iterations "
            f"({len(result.tree)} nodes, {result.wall_time:.2f} s)"
        )
    if result.truncated:
        print("stopped early: time budget exhausted")
    print(f"outputs written to {out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    path = Path(args.manifest)
    try:
        man = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read manifest {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    if man.get("command") != "plan":
        raise ConfigurationError(f"{path}: only plan manifests can be replayed")
    scenario, source = _load_scenario(man["scenario"])
    if _scenario_digest(source) != man.get("scenario_sha256"):
        print(f"warning: scenario {source} changed since the manifest was written", file=sys.stderr)
    out = args.out if args.out is not None else man["output_directory"]
    return _run_plan(scenario, source, dict(man.get("overrides", {})), out, man.get("svg", False), man.get("dims"))


def _default_dims(scenario: Scenario) -> tuple[int, int]:
    pos = scenario.environment.position_dims
    return (pos[0], pos[1]) if len(pos) >= 2 else (0, 1)


def cmd_steer(args) -> int:
    scenario, source = _load_scenario(args.scenario)
    n = scenario.system.n
    x0 = scenario.start if args.x0 is None else args.x0
    x1 = scenario.goal if args.x1 is None else args.x1
    for name, v in (("x0", x0), ("x1", x1)):
        if v.shape != (n,):
            raise ConfigurationError(f"--{name} has {v.size} entries, the system state has {n}")
    sys_lin = scenario.linear_model(at=x0)
    flag = args.backend or "closed"
    names = ["closed_form", "rk4"] if flag == "both" else [_backend_name(flag)]
    if "closed_form" in names and not nilpotency(sys_lin).is_nilpotent:
        raise ConfigurationError("closed-form backend needs nilpotent dynamics; use --backend rk4")
    out = _out_dir(args.out, "kinorrt-steer")
    conns = {}
    for name in names:
        steer = Steer(sys_lin, name, kernels=args.kernels)
        conn = steer.connection(x0, x1)
        conns[name] = conn
        traj = None if conn.is_identity else conn.trajectory(args.sample_dt)
        fname = "trajectory.csv" if name == names[0] else f"trajectory_{name}.csv"
        _write(out / fname, trajectory_csv(traj, n, scenario.system.m))
        print(f"{name}: tau* = {fmt(conn.tau_star)}  c* = {fmt(conn.cost)}")
    status = EXIT_OK
    if flag == "both":
        a, b = conns["closed_form"].cost, conns["rk4"].cost
        diff = abs(a - b)
        rel = diff / max(abs(a), 1e-300)
        print(f"|delta c*| = {diff:.3e} (relative {rel:.3e}, tolerance {args.tolerance:g})")
        if rel > args.tolerance:
            print("backends disagree beyond tolerance", file=sys.stderr)
            status = EXIT_NUMERICAL
    man = _manifest("steer", source, _overrides(args), out, None, {})
    man.update(x0=list(map(float, x0)), x1=list(map(float, x1)))
    man["results"] = {k: {"tau_star": c.tau_star, "cost": c.cost} for k, c in conns.items()}
    _write(out / "manifest.json", json.dumps(man, indent=2) + "\n")
    return status


def bench_rows(scenario: Scenario, node_counts, budget: float, seed: int | None = None, radius=None, kernels=None):
    """Run both backends to ``max(node_counts)`` nodes; one dict per (backend, node count).

    Runs stop at the wall-clock ``budget``; node counts not reached are
    reported with ``complete = False`` and ``nan`` time and cost.
    """
    top = max(node_counts)
    base = scenario.planner
    if seed is not None:
        base = replace(base, seed=seed)
    if radius is not None:
        base = replace(base, radius=radius, gamma=None, dimension=None)
    rows = []
    for backend in ("closed_form", "rk4"):
        cfg = replace(
            base, backend=backend, kernels=kernels, max_nodes=top, max_iterations=1000 * top, time_budget=budget
        )
        res = plan(scenario.system, scenario.environment, scenario.start, scenario.goal, cfg)
        for k in node_counts:
            t = res.time_to_nodes(k)
            rows.append(
                {
                    "scenario": scenario.name,
                    "backend": backend,
                    "nodes": k,
                    "wall_time_s": t,
                    "best_cost": res.cost_at_nodes(k),
                    "complete": bool(math.isfinite(t)),
                }
            )
    return rows


def bench_table(rows) -> str:
    """Text table: one row per node count, closed/rk4 time per scenario and their ratio."""
    scen = list(dict.fromkeys(r["scenario"] for r in rows))
    counts = sorted({r["nodes"] for r in rows})
    get = {(r["scenario"], r["backend"], r["nodes"]): r for r in rows}
    head = ["nodes"]
    for s in scen:
        head += [f"{s} closed", f"{s} rk4", f"{s} ratio"]
    lines = [head]
    for k in counts:
        line = [str(k)]
        for s in scen:
            a, b = get[(s, "closed_form", k)], get[(s, "rk4", k)]
            ta = f"{a['wall_time_s']:.3f}" if a["complete"] else "partial"
            tb = f"{b['wall_time_s']:.3f}" if b["complete"] else "partial"
            ratio = f"{b['wall_time_s'] / a['wall_time_s']:.1f}" if a["complete"] and b["complete"] else "-"
            line += [ta, tb, ratio]
        lines.append(line)
    widths = [max(len(row[i]) for row in lines) for i in range(len(head))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in lines) + "\n"


def cmd_bench(args) -> int:
    loaded = [_load_scenario(s) for s in (args.scenario or ["double_integrator"])]
    counts = args.nodes or list(DEFAULT_NODE_COUNTS)
    if any(k < 1 for k in counts):
        raise ConfigurationError("--nodes must be positive")
    for sc, _ in loaded:
        if not nilpotency(sc.linear_model()).is_nilpotent:
            raise ConfigurationError(f"scenario {sc.name}: closed-form backend needs nilpotent dynamics")
    out = _out_dir(args.out, "kinorrt-bench")
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    rows = []
    for sc, _ in loaded:
        rows += bench_rows(sc, counts, args.budget, args.seed, args.radius, args.kernels)
    table = bench_table(rows)
    print(table, end="")
    header = ["scenario", "backend", "nodes", "wall_time_s", "best_cost", "complete"]
    _write(out / "bench.csv", _csv(header, [[r[h] for h in header] for r in rows]))
    _write(out / "bench.txt", table)
    man = _manifest("bench", loaded[0][1], _overrides(args), out, None, {"started_utc": started})
    man["scenarios"] = [src for _, src in loaded]
    man["node_counts"] = counts
    man["budget_s"] = args.budget
    _write(out / "manifest.json", json.dumps(man, indent=2) + "\n")
    return EXIT_OK


def cmd_render(args) -> int:
    scenario, _ = _load_scenario(args.scenario)
    header, data = read_trajectory_csv(args.trajectory)
    n = scenario.system.n
    xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
    if len(xcols) != n:
        raise ConfigurationError(f"{args.trajectory}: {len(xcols)} state columns, scenario state has {n}")
    dims = tuple(args.dims) if args.dims else _default_dims(scenario)
    svg = render_projection(data[:, xcols], scenario.environment, dims)
    out = Path(args.out) if args.out else Path(args.trajectory).with_suffix(".svg")
    out.parent.mkdir(parents=True, exist_ok=True)
    _write(out, svg)
    print(f"wrote {out}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kinorrt", description="Kinodynamic RRT* with optimal fixed-final-state connections.")
    p.add_argument("--version", action="version", version=f"kinorrt {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, backend_choices=BACKEND_CHOICES):
        sp.add_argument("--scenario", required=True, help="scenario TOML file or bundled name")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--iterations", type=int)
        sp.add_argument("--backend", choices=backend_choices)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--radius", type=parse_float, help="neighbor cost radius, or inf")
        sp.add_argument("--sample-dt", dest="sample_dt", type=parse_float)
        sp.add_argument("--kernels", choices=("python", "compiled"), help="force a kernel implementation")

    sp = sub.add_parser("plan", help="run the planner on a scenario")
    common(sp)
    sp.add_argument("--svg", action="store_true", help="also write solution.svg")
    sp.add_argument("--dims", type=parse_ints, help="projection dims for --svg, e.g. 0,1")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("steer", help="optimal connection between two states")
    common(sp)
    sp.add_argument("--x0", type=parse_vector, help="initial state (default: scenario start)")
    sp.add_argument("--x1", type=parse_vector, help="final state (default: scenario goal)")
    sp.add_argument("--tolerance", type=parse_float, default=1e-2, help="relative cost tolerance for --backend both")
    sp.set_defaults(func=cmd_steer)

    sp = sub.add_parser("bench", help="closed-form vs rk4 wall time per node count")
    sp.add_argument("--scenario", action="append", help="scenario file or bundled name (repeatable)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--radius", type=parse_float)
    sp.add_argument("--nodes", type=parse_ints, help="node counts, e.g. 1000,2000,3000")
    sp.add_argument("--budget", type=parse_float, default=600.0, help="wall-clock cap per run in seconds")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--kernels", choices=("python", "compiled"))
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("render", help="SVG projection of a trajectory CSV")
    sp.add_argument("--trajectory", required=True, help="trajectory CSV (t, x_*, u_*)")
    sp.add_argument("--scenario", required=True, help="scenario supplying obstacles and bounds")
    sp.add_argument("--dims", type=parse_ints, help="two state indices, e.g. 0,1")
    sp.add_argument("--out", help="SVG path (default: next to the CSV)")
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("replay", help="re-run a plan from its manifest.json")
    sp.add_argument("manifest")
    sp.add_argument("--out", help="output directory (default: the manifest's)")
    sp.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (KinoRRTError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
