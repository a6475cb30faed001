"""Kinodynamic RRT*: optimal-connection tree with rewiring and goal injection.

Every iteration samples a free state, connects it to the tree node that gives
it the lowest cost-from-root through a collision-free optimal connection, and
then tries to improve every other node (and the goal state, whether or not it
is already in the tree) by routing through the new node. Cost reductions are
propagated to the whole subtree of each rewired node.

Nodes are kept in flat arrays so the cost queries against all nodes run as a
single batched kernel call.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from kinorrt.errors import BlockedEnvironmentError, ConfigurationError, KinoRRTError, NumericalError
from kinorrt.nonlinear import NonlinearSystem, linearize_at
from kinorrt.steer import Steer, Trajectory, get_steer
from kinorrt.world import Environment

MAX_SAMPLE_DRAWS = 1_000_000
NO_PARENT = -1


@dataclass(frozen=True)
class PlannerConfig:
    """Planner settings.

    ``radius`` is a constant cost threshold (``inf`` for all-pairs). When
    ``gamma`` is set the shrinking schedule ``((gamma / zeta_d) log i / i)^(1/d)``
    is used instead, with ``d = dimension``. ``radius_cap`` bounds either mode.
    """

    max_iterations: int = 1000
    radius: float = math.inf
    gamma: float | None = None
    dimension: int | None = None
    radius_cap: float | None = None
    seed: int = 0
    relinearize: bool = False
    backend: str = "auto"
    kernels: str | None = None
    sample_dt: float | None = None
    max_nodes: int | None = None
    time_budget: float | None = None
    debug: bool = False

    def __post_init__(self):
        if int(self.max_iterations) < 1:
            raise ConfigurationError("max_iterations must be at least 1")
        if self.gamma is not None:
            if not self.gamma > 0:
                raise ConfigurationError("gamma must be positive")
            if self.dimension is None or int(self.dimension) < 1:
                raise ConfigurationError("radius schedule needs a positive integer dimension")
        elif not self.radius > 0:
            raise ConfigurationError("radius must be positive (or inf)")
        if self.radius_cap is not None and not self.radius_cap > 0:
            raise ConfigurationError("radius_cap must be positive")
        if self.sample_dt is not None and not self.sample_dt > 0:
            raise ConfigurationError("sample_dt must be positive")


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def neighbor_radius(i: int, cfg: PlannerConfig) -> float:
    """Connection threshold when the tree holds ``i`` nodes."""
    if cfg.gamma is None:
        r = cfg.radius
    else:
        i = max(int(i), 2)
        d = int(cfg.dimension)
        r = (cfg.gamma / unit_ball_volume(d) * math.log(i) / i) ** (1.0 / d)
    if cfg.radius_cap is not None:
        r = min(r, cfg.radius_cap)
    return r


class PlanTree:
    """Growable tree with parent links, children lists and costs-from-root."""

    def __init__(self, root, capacity: int = 1024):
        root = np.asarray(root, dtype=float)
        self.n = root.size
        self._states = np.empty((capacity, self.n))
        self._cost = np.empty(capacity)
        self._parent = np.empty(capacity, dtype=np.int64)
        self._lin = np.empty(capacity, dtype=np.int64)
        self.children: list[list[int]] = []
        self.size = 0
        self.goal_node: int | None = None
        self.add(root, NO_PARENT, 0.0, NO_PARENT)

    def __len__(self) -> int:
        return self.size

    @property
    def states(self) -> np.ndarray:
        return self._states[: self.size]

    @property
    def cost(self) -> np.ndarray:
        return self._cost[: self.size]

    @property
    def parent(self) -> np.ndarray:
        return self._parent[: self.size]

    @property
    def lin(self) -> np.ndarray:
        """Node whose state the edge into each node was linearized about (nonlinear mode)."""
        return self._lin[: self.size]

    def _grow(self):
        cap = 2 * self._states.shape[0]
        for name in ("_states", "_cost", "_parent", "_lin"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self.size] = old[: self.size]
            setattr(self, name, new)

    def add(self, state, parent: int, cost: float, lin: int) -> int:
        if self.size == self._states.shape[0]:
            self._grow()
        i = self.size
        self._states[i] = state
        self._cost[i] = cost
        self._parent[i] = parent
        self._lin[i] = lin
        self.children.append([])
        if parent != NO_PARENT:
            self.children[parent].append(i)
        self.size += 1
        return i

    def reparent(self, i: int, parent: int, cost: float, lin: int) -> None:
        """Move node ``i`` under ``parent`` and shift its subtree by the cost change."""
        old = int(self._parent[i])
        if old != NO_PARENT:
            self.children[old].remove(i)
        self.children[parent].append(i)
        self._parent[i] = parent
        self._lin[i] = lin
        delta = cost - self._cost[i]
        stack = [i]
        while stack:
            j = stack.pop()
            self._cost[j] += delta
            stack.extend(self.children[j])
        self._cost[i] = cost

    def path_to(self, i: int) -> list[int]:
        path = [i]
        while self._parent[path[-1]] != NO_PARENT:
            path.append(int(self._parent[path[-1]]))
        return path[::-1]

    def subtree(self, i: int) -> list[int]:
        out, stack = [], [i]
        while stack:
            j = stack.pop()
            out.append(j)
            stack.extend(self.children[j])
        return out

    def check_structure(self) -> None:
        """Raise ``AssertionError`` if parents/children disagree or a cycle exists."""
        assert self._parent[0] == NO_PARENT and self._cost[0] == 0.0
        for j in range(1, self.size):
            p = int(self._parent[j])
            assert 0 <= p < self.size and j in self.children[p]
        for p, kids in enumerate(self.children):
            for j in kids:
                assert self._parent[j] == p
        assert len(self.subtree(0)) == self.size


@dataclass
class PlannerResult:
    tree: PlanTree
    history: np.ndarray  # rows (iteration, nodes, best_cost, wall_time)
    solution: Trajectory | None
    solution_cost: float
    config: PlannerConfig
    iterations: int
    discarded: int
    wall_time: float
    truncated: bool = False
    segments: list = field(default_factory=list)

    @property
    def best_cost(self) -> float:
        return float(self.history[-1, 2]) if self.history.size else math.inf

    def time_to_nodes(self, count: int) -> float:
        """Cumulative planning time when the tree first held ``count`` nodes (``nan`` if never)."""
        hit = np.flatnonzero(self.history[:, 1] >= count)
        return float(self.history[hit[0], 3]) if hit.size else math.nan

    def cost_at_nodes(self, count: int) -> float:
        hit = np.flatnonzero(self.history[:, 1] >= count)
        return float(self.history[hit[0], 2]) if hit.size else math.nan


class KinodynamicRRTStar:
    """Planner over one system/environment/endpoint triple.

    Parameters
    ----------
    system : LtiSystem or NonlinearSystem
        Linear systems steer with one fixed model. Nonlinear systems are
        relinearized about every sample (``u_hat = 0``).
    env : Environment
    start, goal : array_like
    config : PlannerConfig
    """

    def __init__(self, system, env: Environment, start, goal, config: PlannerConfig | None = None):
        cfg = config or PlannerConfig()
        self.system = system
        self.env = env
        self.start = np.array(start, dtype=float)
        self.goal = np.array(goal, dtype=float)
        n = system.n
        if self.start.shape != (n,) or self.goal.shape != (n,):
            raise ConfigurationError(f"start and goal must have length {n}")
        if env.n != n or env.m != system.m:
            raise ConfigurationError("environment dimensions do not match the system")
        if not env.state_free(self.start):
            raise ConfigurationError("start state is not free")
        if not env.state_free(self.goal):
            raise ConfigurationError("goal state is not free")
        if not env.bounded:
            raise ConfigurationError("sampling needs finite state bounds")
        self.nonlinear = isinstance(system, NonlinearSystem)
        if self.nonlinear and not cfg.relinearize:
            cfg = replace(cfg, relinearize=True)
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self._env_args = env.kernel_args
        self._fixed: Steer | None = None
        if not self.nonlinear:
            self._fixed = get_steer(system, cfg.backend, cfg.kernels)

    # -- steering helpers ---------------------------------------------------

    def steer_at(self, x_hat) -> Steer:
        """Steering solver for connections linearized about ``x_hat``."""
        if self._fixed is not None:
            return self._fixed
        return Steer(linearize_at(self.system, x_hat), self.cfg.backend, kernels=self.cfg.kernels)

    def _edge_free(self, steer: Steer, x0, x1, tau: float, cost: float, d) -> bool:
        return steer.edge_free(x0, x1, tau, cost, d, self.cfg.sample_dt, self._env_args)

    # -- algorithm steps ------------------------------------------------------

    def sample_free(self) -> np.ndarray:
        lo, hi = self.env.state_lower, self.env.state_upper
        for _ in range(MAX_SAMPLE_DRAWS):
            x = self.rng.uniform(lo, hi)
            if self.env.state_free(x):
                return x
        raise BlockedEnvironmentError(f"no free state found in {MAX_SAMPLE_DRAWS} draws")

    def choose_parent(self, tree: PlanTree, x_new, r: float, steer: Steer) -> tuple[int, float]:
        """Best collision-free parent for ``x_new`` as ``(index, cost)``; ``(NO_PARENT, inf)`` if none."""
        tau, c, d = steer.costs_to(tree.states, x_new)
        total = tree.cost + c
        cand = np.flatnonzero((c < r) & np.isfinite(total))
        if cand.size == 0:
            return NO_PARENT, math.inf
        order = cand[np.lexsort((cand, total[cand]))]
        for j in order:
            if self._edge_free(steer, tree.states[j], x_new, tau[j], c[j], None if d is None else d[j]):
                return int(j), float(total[j])
        return NO_PARENT, math.inf

    def rewire(self, tree: PlanTree, i: int, r: float, steer: Steer, lin: int) -> None:
        """Re-route nodes (and the goal) through node ``i`` where that is cheaper."""
        ci = tree.cost[i]
        # c* >= 0, so only nodes already costlier than x_i can improve
        targets = np.flatnonzero(tree.cost > ci)
        inject_goal = tree.goal_node is None
        X = tree.states[targets]
        if inject_goal:
            X = np.vstack([X, self.goal[None]])
        if X.shape[0] == 0:
            return
        xi = tree.states[i].copy()
        tau, c, d = steer.costs_from(xi, X)
        new_cost = ci + c
        for k in np.flatnonzero((c < r) & np.isfinite(new_cost)):
            dk = None if d is None else d[k]
            if k < targets.size:
                j = int(targets[k])
                if new_cost[k] < tree.cost[j] and self._edge_free(steer, xi, X[k], tau[k], c[k], dk):
                    tree.reparent(j, i, float(new_cost[k]), lin)
            elif self._edge_free(steer, xi, X[k], tau[k], c[k], dk):
                tree.goal_node = tree.add(self.goal, i, float(new_cost[k]), lin)

    # -- main loop -------------------------------------------------------------

    def plan(self, progress: Callable[[int, PlanTree], None] | None = None) -> PlannerResult:
        cfg = self.cfg
        tree = PlanTree(self.start, capacity=min(cfg.max_iterations + 2, 1 << 16))
        history = np.empty((cfg.max_iterations + 1, 4))
        discarded = 0
        truncated = False
        t0 = time.perf_counter()

        # goal injection from the root, so the direct start-goal connection is tried
        try:
            root_steer = self.steer_at(self.start)
        except NumericalError:
            root_steer = None
        if root_steer is not None:
            self.rewire(tree, 0, neighbor_radius(1, cfg), root_steer, 0 if self.nonlinear else NO_PARENT)
        history[0] = (0, tree.size, self._best(tree), time.perf_counter() - t0)

        it = 0
        for it in range(1, cfg.max_iterations + 1):
            x = self.sample_free()
            try:
                steer = self.steer_at(x)
            except KinoRRTError:
                steer = None  # linearization not controllable: sample discarded
            if steer is not None:
                r = neighbor_radius(tree.size, cfg)
                parent, cost = self.choose_parent(tree, x, r, steer)
                if parent != NO_PARENT:
                    lin = tree.size if self.nonlinear else NO_PARENT
                    i = tree.add(x, parent, cost, lin)
                    self.rewire(tree, i, r, steer, lin)
                else:
                    discarded += 1
            else:
                discarded += 1
            history[it] = (it, tree.size, self._best(tree), time.perf_counter() - t0)
            if cfg.debug:
                self.check_invariants(tree)
            if progress is not None:
                progress(it, tree)
            if cfg.max_nodes is not None and tree.size >= cfg.max_nodes:
                break
            if cfg.time_budget is not None and history[it, 3] > cfg.time_budget:
                truncated = True
                break
        wall = time.perf_counter() - t0
        history = history[: it + 1]

        solution, sol_cost, segments = None, math.inf, []
        if tree.goal_node is not None:
            solution, sol_cost, segments = self.extract(tree, tree.goal_node)
        return PlannerResult(tree, history, solution, sol_cost, cfg, it, discarded, wall, truncated, segments)

    @staticmethod
    def _best(tree: PlanTree) -> float:
        return float(tree.cost[tree.goal_node]) if tree.goal_node is not None else math.inf

    def edge_steer(self, tree: PlanTree, j: int) -> Steer:
        lin = int(tree.lin[j])
        return self.steer_at(tree.states[lin]) if self.nonlinear else self._fixed

    def extract(self, tree: PlanTree, node: int) -> tuple[Trajectory, float, list]:
        """Concatenated optimal segments from the root to ``node``, recomputed by steering."""
        path = tree.path_to(node)
        parts, conns = [], []
        total = 0.0
        for a, b in zip(path[:-1], path[1:]):
            conn = self.edge_steer(tree, b).connection(tree.states[a], tree.states[b])
            conns.append(conn)
            parts.append(conn.trajectory(self.cfg.sample_dt))
            total += conn.cost
        if not parts:
            m = self.system.m
            return Trajectory(np.zeros(1), tree.states[node][None].copy(), np.zeros((1, m))), 0.0, []
        return Trajectory.concatenate(parts), total, conns

    def check_invariants(self, tree: PlanTree, rtol: float = 1e-6) -> None:
        """Full recomputation of edge costs; raises ``AssertionError`` on mismatch."""
        tree.check_structure()
        for j in range(1, tree.size):
            p = int(tree.parent[j])
            c = self.edge_steer(tree, j).connection(tree.states[p], tree.states[j]).cost
            expect = tree.cost[p] + c
            assert abs(tree.cost[j] - expect) <= rtol * max(1.0, abs(expect)), (j, tree.cost[j], expect)


def plan(system, env: Environment, start, goal, config: PlannerConfig | None = None, progress=None) -> PlannerResult:
    """Run :class:`KinodynamicRRTStar` once."""
    return KinodynamicRRTStar(system, env, start, goal, config).plan(progress)


__all__ = [
    "PlannerConfig",
    "PlanTree",
    "PlannerResult",
    "KinodynamicRRTStar",
    "neighbor_radius",
    "unit_ball_volume",
    "plan",
]
