import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinorrt import planner as planner_mod
from kinorrt.errors import BlockedEnvironmentError, ConfigurationError
from kinorrt.planner import (
    NO_PARENT,
    KinodynamicRRTStar,
    PlannerConfig,
    PlanTree,
    neighbor_radius,
    plan,
    unit_ball_volume,
)
from kinorrt.scenarios import build
from kinorrt.steer import optimal_arrival_time
from kinorrt.world import Box, Environment


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)
    assert unit_ball_volume(4) == pytest.approx(math.pi**2 / 2)


def test_neighbor_radius_schedule():
    assert neighbor_radius(10, PlannerConfig()) == math.inf
    assert neighbor_radius(10, PlannerConfig(radius=3.0)) == 3.0
    cfg = PlannerConfig(gamma=100.0, dimension=2)
    for i in (2, 10, 1000):
        assert neighbor_radius(i, cfg) == pytest.approx(math.sqrt(100.0 / math.pi * math.log(i) / i))
    assert neighbor_radius(1, cfg) == neighbor_radius(2, cfg)
    radii = [neighbor_radius(i, cfg) for i in range(3, 2000, 50)]
    assert all(a >= b for a, b in zip(radii, radii[1:]))
    assert neighbor_radius(5, replace(cfg, radius_cap=0.5)) == 0.5


@pytest.mark.parametrize(
    "kwargs",
    [dict(max_iterations=0), dict(radius=0.0), dict(gamma=-1.0, dimension=2), dict(gamma=1.0), dict(sample_dt=0.0)],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        PlannerConfig(**kwargs)


# -- tree ------------------------------------------------------------------------


def test_tree_reparent_shifts_subtree():
    t = PlanTree(np.zeros(2), capacity=2)
    a = t.add([1.0, 0.0], 0, 5.0, NO_PARENT)
    b = t.add([2.0, 0.0], a, 7.0, NO_PARENT)
    c = t.add([3.0, 0.0], b, 10.0, NO_PARENT)
    d = t.add([0.0, 1.0], 0, 1.0, NO_PARENT)
    t.reparent(b, d, 2.0, NO_PARENT)
    assert t.parent[b] == d and b in t.children[d] and b not in t.children[a]
    np.testing.assert_allclose(t.cost[[b, c]], [2.0, 5.0])
    assert t.path_to(c) == [0, d, b, c]
    assert sorted(t.subtree(d)) == sorted([d, b, c])
    t.check_structure()


@settings(max_examples=50, deadline=None)
@given(ops=st.lists(st.tuples(st.integers(0, 10**6), st.floats(0.1, 10.0), st.booleans()), min_size=1, max_size=60))
def test_tree_costs_stay_consistent(ops):
    # model: edge costs per node; the tree's cost must equal the sum along the path
    t = PlanTree(np.zeros(1), capacity=4)
    edge = {0: 0.0}
    for key, w, move in ops:
        if move and t.size > 2:
            i = 1 + key % (t.size - 1)
            sub = set(t.subtree(i))
            options = [j for j in range(t.size) if j not in sub]
            p = options[key % len(options)]
            edge[i] = w
            t.reparent(i, p, float(t.cost[p] + w), NO_PARENT)
        else:
            p = key % t.size
            i = t.add([float(t.size)], p, float(t.cost[p] + w), NO_PARENT)
            edge[i] = w
    t.check_structure()
    for i in range(t.size):
        expect = sum(edge[j] for j in t.path_to(i))
        assert t.cost[i] == pytest.approx(expect, rel=1e-12, abs=1e-12)


# -- planning --------------------------------------------------------------------


def test_empty_world_matches_direct_connection():
    sc = build("double_integrator_empty")
    res = plan(sc.system, sc.environment, sc.start, sc.goal, replace(sc.planner, max_iterations=50))
    direct = optimal_arrival_time(sc.system, sc.start, sc.goal).cost
    assert res.best_cost == pytest.approx(direct, rel=1e-12)
    assert res.solution_cost == pytest.approx(direct, rel=1e-9)
    np.testing.assert_allclose(res.solution.x[0], sc.start, atol=1e-9)
    np.testing.assert_allclose(res.solution.x[-1], sc.goal, atol=1e-9)


@pytest.fixture(scope="module")
def blocked_run():
    sc = build("double_integrator_blocked")
    cfg = replace(sc.planner, max_iterations=300, debug=True)
    return sc, plan(sc.system, sc.environment, sc.start, sc.goal, cfg)


def test_blocked_solution_is_valid(blocked_run):
    sc, res = blocked_run
    assert res.solution is not None
    assert sc.environment.trajectory_free(res.solution)
    np.testing.assert_allclose(res.solution.x[0], sc.start, atol=1e-8)
    np.testing.assert_allclose(res.solution.x[-1], sc.goal, atol=1e-8)
    # the straight line is blocked, so the optimum must cost more than the direct connection
    assert res.best_cost > optimal_arrival_time(sc.system, sc.start, sc.goal).cost
    assert res.solution_cost == pytest.approx(res.best_cost, rel=1e-9)


def test_history_is_monotone(blocked_run):
    _, res = blocked_run
    h = res.history
    assert np.array_equal(h[:, 0], np.arange(h.shape[0]))
    assert np.all(h[1:, 2] <= h[:-1, 2])
    assert np.all(np.diff(h[:, 1]) >= 0)
    assert np.all(np.diff(h[:, 3]) >= 0.0)


def test_same_seed_same_tree():
    sc = build("double_integrator_blocked")
    cfg = replace(sc.planner, max_iterations=120)
    a = plan(sc.system, sc.environment, sc.start, sc.goal, cfg)
    b = plan(sc.system, sc.environment, sc.start, sc.goal, cfg)
    assert np.array_equal(a.tree.states, b.tree.states)
    assert np.array_equal(a.tree.parent, b.tree.parent)
    assert np.array_equal(a.history[:, :3], b.history[:, :3])
    c = plan(sc.system, sc.environment, sc.start, sc.goal, replace(cfg, seed=1))
    assert not np.array_equal(a.tree.states[1:5], c.tree.states[1:5])


def test_rk4_backend_plans_the_same_tree():
    sc = build("double_integrator_blocked")
    cfg = replace(sc.planner, max_iterations=25)
    a = plan(sc.system, sc.environment, sc.start, sc.goal, replace(cfg, backend="closed_form"))
    b = plan(sc.system, sc.environment, sc.start, sc.goal, replace(cfg, backend="rk4"))
    assert np.array_equal(a.tree.parent, b.tree.parent)
    np.testing.assert_allclose(a.tree.cost, b.tree.cost, rtol=1e-4)


def test_car_planning_relinearizes():
    sc = build("car")
    planner = KinodynamicRRTStar(sc.system, sc.environment, sc.start, sc.goal, replace(sc.planner, max_iterations=40))
    res = planner.plan()
    t = res.tree
    assert planner.cfg.relinearize
    assert np.all(t.lin[1:] >= 0) and np.all(t.lin[1:] < t.size)
    planner.check_invariants(t)


def test_infeasible_endpoints_rejected():
    sc = build("double_integrator_blocked")
    with pytest.raises(ConfigurationError, match="start"):
        KinodynamicRRTStar(sc.system, sc.environment, [70.0, 50.0, 0.0, 0.0], sc.goal)
    with pytest.raises(ConfigurationError, match="goal"):
        KinodynamicRRTStar(sc.system, sc.environment, sc.start, [70.0, 50.0, 0.0, 0.0])
    with pytest.raises(ConfigurationError, match="length"):
        KinodynamicRRTStar(sc.system, sc.environment, sc.start[:3], sc.goal)


def test_unbounded_sampling_rejected():
    sc = build("double_integrator_empty")
    env = Environment([0.0, 0.0, -1.0, -math.inf], [1.0, 1.0, 1.0, math.inf], [-1, -1], [1, 1])
    with pytest.raises(ConfigurationError, match="finite"):
        KinodynamicRRTStar(sc.system, env, np.zeros(4), np.zeros(4))


def test_blocked_sampling_raises(monkeypatch):
    sc = build("double_integrator_empty")
    # only a thin corridor around y = 50 is free, so most draws are rejected
    env = sc.environment.with_obstacles([Box([0.0, 0.0], [200.0, 48.0]), Box([0.0, 52.0], [200.0, 100.0])])
    monkeypatch.setattr(planner_mod, "MAX_SAMPLE_DRAWS", 3)
    p = KinodynamicRRTStar(sc.system, env, sc.start, sc.goal, PlannerConfig(max_iterations=5, seed=4))
    with pytest.raises(BlockedEnvironmentError):
        for _ in range(50):
            p.sample_free()


def test_max_nodes_and_time_budget():
    sc = build("double_integrator_blocked")
    res = plan(sc.system, sc.environment, sc.start, sc.goal, replace(sc.planner, max_iterations=500, max_nodes=30))
    assert len(res.tree) == 30 and not res.truncated
    res = plan(sc.system, sc.environment, sc.start, sc.goal, replace(sc.planner, max_iterations=10**6, time_budget=0.2))
    assert res.truncated and res.iterations < 10**6
    assert res.time_to_nodes(10**9) != res.time_to_nodes(10**9)  # nan when never reached
