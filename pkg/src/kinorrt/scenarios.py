"""Benchmark systems, their environments and the TOML scenario format.

A scenario file has four tables::

    name = "double_integrator"

    [system]
    kind = "linear"            # or "car"
    A = [[...], ...]           # row-major; linear only
    B = [[...], ...]
    c = [...]
    R = [[...], ...]           # full matrix, or a list for a diagonal

    [environment]
    state_lower = [...]
    state_upper = [...]
    control_lower = [...]
    control_upper = [...]
    position_dims = [0, 1]
    robot_radius = 1.5
    angle_dims = []
    [[environment.obstacles]]
    min = [40.0, 0.0]
    max = [55.0, 65.0]

    [planner]
    iterations = 1000
    radius = inf               # or gamma = ..., dimension = ...
    seed = 0

    [endpoints]
    start = [...]
    goal = [...]

Obstacle layouts and endpoints are representative choices, not measured
reproductions of any published environment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from kinorrt.dynamics import LtiSystem
from kinorrt.errors import ConfigurationError
from kinorrt.nonlinear import NonlinearSystem, car_system, linearize_at
from kinorrt.planner import PlannerConfig
from kinorrt.world import Box, Environment

GRAVITY = 9.8
#: placeholder quadrotor constants (mass kg, arm length m, inertia kg m^2)
QUAD_MASS = 0.5
QUAD_ARM = 0.17
QUAD_INERTIA = 0.002

BUNDLED = ("double_integrator", "double_integrator_empty", "double_integrator_blocked", "quadrotor", "car", "fig2")


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    system: LtiSystem | NonlinearSystem
    environment: Environment
    start: np.ndarray
    goal: np.ndarray
    planner: PlannerConfig

    def __post_init__(self):
        start = np.array(self.start, dtype=float)
        goal = np.array(self.goal, dtype=float)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "goal", goal)
        n = self.system.n
        if start.shape != (n,) or goal.shape != (n,):
            raise ConfigurationError(f"[endpoints]: start and goal must have length {n}")
        if self.environment.n != n or self.environment.m != self.system.m:
            raise ConfigurationError(
                f"[environment]: bounds describe {self.environment.n} states / {self.environment.m} controls, "
                f"system has {n} / {self.system.m}"
            )
        if not self.environment.state_free(start):
            raise ConfigurationError("[endpoints].start is not in the free state space")
        if not self.environment.state_free(goal):
            raise ConfigurationError("[endpoints].goal is not in the free state space")

    @property
    def kind(self) -> str:
        return "car" if isinstance(self.system, NonlinearSystem) else "linear"

    @property
    def sample_dt(self) -> float | None:
        return self.planner.sample_dt

    def linear_model(self, at=None) -> LtiSystem:
        """The steering model: the system itself, or the car linearized about ``at`` (default start)."""
        if isinstance(self.system, NonlinearSystem):
            return linearize_at(self.system, self.start if at is None else at)
        return self.system

    def equals(self, other: "Scenario") -> bool:
        if self.name != other.name or self.kind != other.kind:
            return False
        if self.kind == "car":
            same_sys = np.array_equal(self.system.R, other.system.R)
        else:
            same_sys = self.system.equals(other.system)
        return (
            same_sys
            and self.environment.equals(other.environment)
            and np.array_equal(self.start, other.start)
            and np.array_equal(self.goal, other.goal)
            and self.planner == other.planner
        )


# -- builders ------------------------------------------------------------------


def double_integrator_system(r: float = 0.25) -> LtiSystem:
    A = np.zeros((4, 4))
    A[:2, 2:] = np.eye(2)
    B = np.zeros((4, 2))
    B[2:, :] = np.eye(2)
    return LtiSystem(A, B, np.zeros(4), r * np.eye(2))


def quadrotor_system(m: float = QUAD_MASS, l: float = QUAD_ARM, j: float = QUAD_INERTIA) -> LtiSystem:
    if not (m > 0 and l > 0 and j > 0):
        raise ConfigurationError("quadrotor mass, arm length and inertia must be positive")
    A = np.zeros((10, 10))
    A[0:3, 3:6] = np.eye(3)
    A[3:6, 6:8] = [[0.0, GRAVITY], [-GRAVITY, 0.0], [0.0, 0.0]]
    A[6:8, 8:10] = np.eye(2)
    B = np.zeros((10, 3))
    B[5, 0] = 1.0 / m
    B[8:10, 1:3] = (l / j) * np.eye(2)
    return LtiSystem(A, B, np.zeros(10), np.diag([0.25, 0.5, 0.5]))


# planar layout shared by the double integrator and the car: three staggered walls
PLANAR_OBSTACLES = (
    Box([45.0, 0.0], [60.0, 65.0]),
    Box([95.0, 35.0], [110.0, 100.0]),
    Box([145.0, 0.0], [160.0, 65.0]),
)
BLOCKING_OBSTACLE = Box([60.0, 25.0], [80.0, 75.0])


def build_double_integrator(variant: str = "default", iterations: int = 10_000, seed: int = 0) -> Scenario:
    """Planar double integrator.

    ``variant`` selects the obstacle layout: ``"default"`` (three walls),
    ``"empty"`` or ``"blocked"`` (one box across the straight start-goal line).
    """
    sys = double_integrator_system()
    if variant == "default":
        obstacles, start, goal, radius = PLANAR_OBSTACLES, [15.0, 85.0, 0, 0], [185.0, 15.0, 0, 0], 1.5
    elif variant == "empty":
        obstacles, start, goal, radius = (), [20.0, 50.0, 0, 0], [120.0, 50.0, 0, 0], 1.5
    elif variant == "blocked":
        obstacles, start, goal, radius = (BLOCKING_OBSTACLE,), [20.0, 50.0, 0, 0], [120.0, 50.0, 0, 0], 1.5
    else:
        raise ConfigurationError(f"unknown double integrator variant {variant!r}")
    env = Environment(
        state_lower=[0.0, 0.0, -10.0, -10.0],
        state_upper=[200.0, 100.0, 10.0, 10.0],
        control_lower=[-10.0, -10.0],
        control_upper=[10.0, 10.0],
        obstacles=obstacles,
        position_dims=(0, 1),
        robot_radius=radius,
    )
    name = "double_integrator" if variant == "default" else f"double_integrator_{variant}"
    if variant == "blocked":
        # shrinking schedule: gamma just above 2^d (1 + 1/d) mu(X) for the 200 x 100 x 20 x 20 box
        cfg = PlannerConfig(max_iterations=iterations, gamma=1.7e8, dimension=4, seed=seed)
    else:
        cfg = PlannerConfig(max_iterations=iterations, radius=math.inf, seed=seed)
    return Scenario(name, sys, env, np.array(start, dtype=float), np.array(goal, dtype=float), cfg)


def build_quadrotor(
    m: float = QUAD_MASS, l: float = QUAD_ARM, j: float = QUAD_INERTIA, iterations: int = 2_000, seed: int = 0
) -> Scenario:
    """Hover-linearized quadrotor in a 5 m cube with a wall to fly around."""
    sys = quadrotor_system(m, l, j)
    env = Environment(
        state_lower=[0, 0, 0, -5, -5, -5, -1, -1, -5, -5],
        state_upper=[5, 5, 5, 5, 5, 5, 1, 1, 5, 5],
        control_lower=[-4.545, -3.62, -3.62],
        control_upper=[9.935, 3.62, 3.62],
        obstacles=(Box([2.0, 0.0, 0.0], [3.0, 3.5, 5.0]),),
        position_dims=(0, 1, 2),
        robot_radius=0.2,
    )
    start = np.zeros(10)
    start[:3] = [0.5, 0.5, 2.5]
    goal = np.zeros(10)
    goal[:3] = [4.5, 0.5, 2.5]
    cfg = PlannerConfig(max_iterations=iterations, radius=math.inf, seed=seed)
    return Scenario("quadrotor", sys, env, start, goal, cfg)


def build_car(R=None, iterations: int = 2_000, seed: int = 0, radius_cap: float = 10.0) -> Scenario:
    """Car-like robot in the planar wall layout; connections capped at ``radius_cap``."""
    sys = car_system(R)
    env = Environment(
        state_lower=[0.0, 0.0, -math.pi, 0.1, -0.25],
        state_upper=[200.0, 100.0, math.pi, 10.0, 0.25],
        control_lower=[-math.inf, -math.inf],
        control_upper=[math.inf, math.inf],
        obstacles=PLANAR_OBSTACLES,
        position_dims=(0, 1),
        robot_radius=1.5,
        angle_dims=(2,),
    )
    start = np.array([15.0, 85.0, 0.0, 2.0, 0.0])
    goal = np.array([185.0, 15.0, 0.0, 2.0, 0.0])
    cfg = PlannerConfig(max_iterations=iterations, radius=math.inf, radius_cap=radius_cap, seed=seed, relinearize=True)
    return Scenario("car", sys, env, start, goal, cfg)


def build_fig2() -> Scenario:
    """One-dimensional double integrator with unit control weight (steering demo)."""
    sys = LtiSystem([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [0.0, 0.0], [[1.0]])
    env = Environment([-10.0, -10.0], [10.0, 10.0], [-10.0], [10.0])
    return Scenario("fig2", sys, env, np.zeros(2), np.ones(2), PlannerConfig(max_iterations=100))


def build(name: str) -> Scenario:
    builders = {
        "double_integrator": lambda: build_double_integrator("default"),
        "double_integrator_empty": lambda: build_double_integrator("empty", iterations=2_000),
        "double_integrator_blocked": lambda: build_double_integrator("blocked", iterations=20_000),
        "quadrotor": build_quadrotor,
        "car": build_car,
        "fig2": build_fig2,
    }
    try:
        return builders[name]()
    except KeyError:
        raise ConfigurationError(f"unknown scenario {name!r}; bundled: {', '.join(BUNDLED)}") from None


# -- file format ---------------------------------------------------------------


def _list(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def scenario_to_dict(s: Scenario) -> dict:
    if s.kind == "car":
        system = {"kind": "car", "R": _list(s.system.R)}
    else:
        system = {"kind": "linear", "A": _list(s.system.A), "B": _list(s.system.B), "c": _list(s.system.c), "R": _list(s.system.R)}
    env = s.environment
    environment = {
        "state_lower": _list(env.state_lower),
        "state_upper": _list(env.state_upper),
        "control_lower": _list(env.control_lower),
        "control_upper": _list(env.control_upper),
        "position_dims": list(env.position_dims),
        "robot_radius": env.robot_radius,
        "angle_dims": list(env.angle_dims),
        "obstacles": [{"min": _list(b.lower), "max": _list(b.upper)} for b in env.obstacles],
    }
    cfg = s.planner
    planner = {"iterations": cfg.max_iterations, "seed": cfg.seed, "backend": cfg.backend}
    if cfg.gamma is None:
        planner["radius"] = float(cfg.radius)
    else:
        planner["gamma"] = float(cfg.gamma)
        planner["dimension"] = int(cfg.dimension)
    for key in ("radius_cap", "sample_dt"):
        if getattr(cfg, key) is not None:
            planner[key] = float(getattr(cfg, key))
    return {
        "name": s.name,
        "system": system,
        "environment": environment,
        "planner": planner,
        "endpoints": {"start": _list(s.start), "goal": _list(s.goal)},
    }


def dumps(s: Scenario) -> str:
    return tomli_w.dumps(scenario_to_dict(s))


def save(s: Scenario, path) -> Path:
    path = Path(path)
    path.write_text(dumps(s))
    return path


class _Fields:
    """Typed access to one table with ``[table].key`` error messages."""

    def __init__(self, data: dict, table: str, source: str):
        if not isinstance(data, dict):
            raise ConfigurationError(f"{source}: [{table}] must be a table")
        self.data, self.table, self.source = data, table, source
        self.used: set[str] = set()

    def _err(self, key: str, msg: str) -> ConfigurationError:
        return ConfigurationError(f"{self.source}: [{self.table}].{key}: {msg}")

    def get(self, key: str, default=...):
        self.used.add(key)
        if key not in self.data:
            if default is ...:
                raise self._err(key, "missing required field")
            return default
        return self.data[key]

    def matrix(self, key: str, default=...):
        v = self.get(key, default)
        if v is None or v is default:
            return v
        try:
            arr = np.array(v, dtype=float)
        except (TypeError, ValueError):
            raise self._err(key, "expected a numeric matrix (list of rows)") from None
        return arr

    def vector(self, key: str, length: int | None = None, default=...):
        v = self.get(key, default)
        if v is None or v is default:
            return v
        try:
            arr = np.array(v, dtype=float)
        except (TypeError, ValueError):
            raise self._err(key, "expected a list of numbers") from None
        if arr.ndim != 1:
            raise self._err(key, "expected a flat list of numbers")
        if length is not None and arr.size != length:
            raise self._err(key, f"expected {length} entries, got {arr.size}")
        return arr

    def number(self, key: str, default=...):
        v = self.get(key, default)
        if v is None:
            return v
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self._err(key, f"expected a number, got {type(v).__name__}")
        return float(v)

    def integer(self, key: str, default=...):
        v = self.get(key, default)
        if v is None:
            return v
        if isinstance(v, bool) or not isinstance(v, int):
            raise self._err(key, f"expected an integer, got {v!r}")
        return int(v)

    def finish(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigurationError(f"{self.source}: [{self.table}]: unknown field(s) {', '.join(extra)}")


def _weight(R: np.ndarray) -> np.ndarray:
    return np.diag(R) if R.ndim == 1 else R


def scenario_from_dict(data: dict, source: str = "<scenario>") -> Scenario:
    top = _Fields(data, "scenario", source)
    name = top.get("name", "scenario")
    if not isinstance(name, str):
        raise ConfigurationError(f"{source}: name must be a string")

    sysf = _Fields(top.get("system"), "system", source)
    kind = sysf.get("kind", "linear")
    try:
        if kind == "linear":
            A = sysf.matrix("A")
            n = A.shape[0] if A.ndim == 2 else 0
            c = sysf.vector("c", None, None)
            system = LtiSystem(A, sysf.matrix("B"), np.zeros(n) if c is None else c, _weight(sysf.matrix("R")))
        elif kind == "car":
            R = sysf.matrix("R", None)
            system = car_system(None if R is None else _weight(R))
        else:
            raise ConfigurationError(f"{source}: [system].kind: expected 'linear' or 'car', got {kind!r}")
    except ConfigurationError as exc:
        if str(exc).startswith(source):
            raise
        raise ConfigurationError(f"{source}: [system]: {exc}") from None
    sysf.finish()
    n, m = system.n, system.m

    envf = _Fields(top.get("environment"), "environment", source)
    obstacles = []
    for k, ob in enumerate(envf.get("obstacles", [])):
        obf = _Fields(ob, f"environment.obstacles[{k}]", source)
        try:
            obstacles.append(Box(obf.vector("min"), obf.vector("max")))
        except ConfigurationError as exc:
            if str(exc).startswith(source):
                raise
            raise ConfigurationError(f"{source}: [environment.obstacles[{k}]]: {exc}") from None
        obf.finish()
    try:
        env = Environment(
            envf.vector("state_lower", n),
            envf.vector("state_upper", n),
            envf.vector("control_lower", m),
            envf.vector("control_upper", m),
            tuple(obstacles),
            tuple(envf.get("position_dims", [])),
            envf.number("robot_radius", 0.0),
            tuple(envf.get("angle_dims", [])),
        )
    except ConfigurationError as exc:
        if str(exc).startswith(source):
            raise
        raise ConfigurationError(f"{source}: [environment]: {exc}") from None
    envf.finish()

    plf = _Fields(top.get("planner", {}), "planner", source)
    try:
        cfg = PlannerConfig(
            max_iterations=plf.integer("iterations", 1000),
            radius=plf.number("radius", math.inf),
            gamma=plf.number("gamma", None),
            dimension=plf.integer("dimension", None),
            radius_cap=plf.number("radius_cap", None),
            seed=plf.integer("seed", 0),
            backend=plf.get("backend", "auto"),
            sample_dt=plf.number("sample_dt", None),
            relinearize=kind == "car",
        )
    except ConfigurationError as exc:
        if str(exc).startswith(source):
            raise
        raise ConfigurationError(f"{source}: [planner]: {exc}") from None
    plf.finish()

    epf = _Fields(top.get("endpoints"), "endpoints", source)
    start, goal = epf.vector("start", n), epf.vector("goal", n)
    epf.finish()
    top.finish()
    try:
        return Scenario(name, system, env, start, goal, cfg)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{source}: {exc}") from None


def loads(text: str, source: str = "<scenario>") -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{source}: {exc}") from None
    return scenario_from_dict(data, source)


def bundled_path(name: str) -> Path:
    ref = resources.files("kinorrt") / "data" / "scenarios" / f"{name}.toml"
    return Path(str(ref))


def load(path_or_name) -> Scenario:
    """Load a scenario file, or a bundled scenario by name."""
    p = Path(path_or_name)
    if not p.exists() and str(path_or_name) in BUNDLED:
        p = bundled_path(str(path_or_name))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario {path_or_name}: {exc.strerror}") from None
    return loads(text, str(path_or_name))


def write_bundled(directory=None) -> list[Path]:
    """Regenerate the bundled scenario files from the builders."""
    directory = Path(directory) if directory is not None else bundled_path("x").parent
    directory.mkdir(parents=True, exist_ok=True)
    return [save(build(name), directory / f"{name}.toml") for name in BUNDLED]


__all__ = [
    "Scenario",
    "build",
    "build_double_integrator",
    "build_quadrotor",
    "build_car",
    "build_fig2",
    "double_integrator_system",
    "quadrotor_system",
    "dumps",
    "loads",
    "load",
    "save",
    "write_bundled",
    "BUNDLED",
]
