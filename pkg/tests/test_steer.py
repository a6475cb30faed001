import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from kinorrt.dynamics import LtiSystem
from kinorrt.errors import BackendError, NotControllableError
from kinorrt.scenarios import double_integrator_system, quadrotor_system
from kinorrt.steer import (
    RK4_STEP_FRACTION,
    Steer,
    Trajectory,
    connect,
    connection_cost,
    default_sample_dt,
    drift_state,
    gramian,
    optimal_arrival_time,
    resolve_backend,
    segment_count,
)

from conftest import (
    FIG2_TAU,
    KERNEL_SETS,
    chain_system,
    cost_oracle,
    drift_oracle,
    fig2_cost,
    fig2_system,
    gramian_oracle,
    oscillator_system,
)

finite = dict(allow_nan=False, allow_infinity=False)


# -- backend selection -----------------------------------------------------------


def test_resolve_backend(fig2, oscillator):
    assert resolve_backend(fig2) == "closed_form"
    assert resolve_backend(oscillator) == "rk4"
    assert resolve_backend(fig2, "closed") == "closed_form"
    with pytest.raises(BackendError):
        resolve_backend(fig2, "euler")


def test_closed_form_needs_nilpotent(oscillator):
    with pytest.raises(BackendError):
        Steer(oscillator, "closed_form")


@pytest.mark.parametrize("backend", ["closed_form", "rk4"])
def test_uncontrollable_rejected(backend):
    sys = LtiSystem(np.zeros((2, 2)), [[1.0], [0.0]], np.zeros(2), [[1.0]])
    with pytest.raises(NotControllableError):
        Steer(sys, backend)


# -- Gramian, drift, cost ----------------------------------------------------------


def test_double_integrator_gramian_closed_form():
    # 1-D double integrator with weight r: G = [[t^3/3, t^2/2], [t^2/2, t]] / r
    sys = LtiSystem([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [0.0, 0.0], [[0.25]])
    for t in (0.1, 1.0, 7.5):
        expect = np.array([[t**3 / 3, t**2 / 2], [t**2 / 2, t]]) / 0.25
        np.testing.assert_allclose(gramian(sys, t), expect, rtol=1e-14)


@pytest.mark.parametrize(
    "sys, backend",
    [
        (double_integrator_system(), "closed_form"),
        (quadrotor_system(), "closed_form"),
        (chain_system(5, 3.0), "closed_form"),
        (oscillator_system(), "rk4"),
        (double_integrator_system(), "rk4"),
    ],
)
@pytest.mark.parametrize("t", [0.3, 2.0])
def test_gramian_matches_quadrature(sys, backend, t):
    G = Steer(sys, backend).gramian(t)
    np.testing.assert_allclose(G, gramian_oracle(sys, t), rtol=1e-8, atol=1e-12 * np.abs(G).max())


@pytest.mark.parametrize("backend", ["closed_form", "rk4"])
def test_drift_with_constant_term(backend):
    sys = LtiSystem(np.diag([1.0, 1.0], 1), [[0.0], [0.0], [1.0]], [0.5, -1.0, 2.0], [[1.0]])
    x0 = np.array([1.0, -2.0, 0.5])
    for t in (0.5, 3.0):
        np.testing.assert_allclose(Steer(sys, backend).drift(x0, t), drift_oracle(sys, x0, t), rtol=1e-9)
    np.testing.assert_allclose(drift_state(sys, x0, 0.0), x0)


def test_fig2_cost_profile(fig2):
    for t in (0.5, 1.0, FIG2_TAU, 3.0, 5.0):
        p = connection_cost(fig2, [0.0, 0.0], [1.0, 1.0], t)
        assert p.cost == pytest.approx(fig2_cost(t), rel=1e-12)
        # derivative of the closed form
        assert p.cost_derivative == pytest.approx(1 - 36 / t**4 + 24 / t**3 - 4 / t**2, abs=1e-10)


@pytest.mark.parametrize(
    "sys, backend",
    [(quadrotor_system(), "closed_form"), (quadrotor_system(), "rk4"), (oscillator_system(), "rk4")],
    ids=["quad-closed", "quad-rk4", "osc-rk4"],
)
def test_cost_matches_quadrature(sys, backend):
    rng = np.random.default_rng(1)
    x0, x1 = rng.normal(size=sys.n), rng.normal(size=sys.n)
    for t in (0.7, 2.5):
        got = Steer(sys, backend).cost_profile(x0, x1, t).cost
        assert got == pytest.approx(cost_oracle(sys, x0, x1, t), rel=1e-7)


@pytest.mark.parametrize("backend", ["closed_form", "rk4"])
def test_cost_derivative_matches_finite_difference(backend):
    sys = double_integrator_system()
    s = Steer(sys, backend)
    x0, x1 = np.array([0.0, 0.0, 1.0, -1.0]), np.array([5.0, 3.0, 0.0, 0.5])
    for t in (1.0, 4.0, 9.0):
        h = 1e-5 * t
        fd = (s.cost_profile(x0, x1, t + h).cost - s.cost_profile(x0, x1, t - h).cost) / (2 * h)
        assert s.cost_profile(x0, x1, t).cost_derivative == pytest.approx(fd, rel=1e-5, abs=1e-7)


# -- optimal arrival time ----------------------------------------------------------


def test_fig2_optimum(fig2):
    conn = optimal_arrival_time(fig2, [0.0, 0.0], [1.0, 1.0], backend="closed_form")
    assert abs(conn.tau_star - FIG2_TAU) < 1e-12
    assert conn.cost == pytest.approx(fig2_cost(FIG2_TAU), rel=1e-12)
    rk = optimal_arrival_time(fig2, [0.0, 0.0], [1.0, 1.0], backend="rk4")
    assert abs(rk.tau_star - FIG2_TAU) < 2 * RK4_STEP_FRACTION * rk.cost
    assert rk.cost == pytest.approx(conn.cost, rel=1e-6)


def test_identity_connection(fig2):
    for backend in ("closed_form", "rk4"):
        conn = optimal_arrival_time(fig2, [0.3, -0.2], [0.3, -0.2], backend=backend)
        assert conn.is_identity and conn.cost == 0.0
        traj = conn.trajectory()
        assert len(traj) == 1 and traj.tau == 0.0


@settings(max_examples=40, deadline=None)
@given(
    x0=st.tuples(*[st.floats(-20, 20, **finite)] * 4),
    x1=st.tuples(*[st.floats(-20, 20, **finite)] * 4),
)
def test_optimum_is_global_on_grid(x0, x1):
    sys = double_integrator_system()
    if np.allclose(x0, x1):
        return
    s = Steer(sys, "closed_form")
    conn = s.connection(x0, x1)
    grid = np.geomspace(1e-2, max(conn.cost, 1.0) * 1.5, 400)
    costs = np.array([s.cost_profile(x0, x1, t).cost for t in grid])
    assert conn.cost <= costs.min() * (1 + 1e-9) + 1e-9
    assert conn.cost > conn.tau_star


@settings(max_examples=6, deadline=None)
@given(
    x0=st.tuples(*[st.floats(-5, 5, **finite)] * 2),
    x1=st.tuples(*[st.floats(-5, 5, **finite)] * 2),
)
def test_rk4_matches_scalar_minimizer_on_oscillator(x0, x1):
    sys = oscillator_system()
    if np.allclose(x0, x1, atol=1e-3):
        return
    s = Steer(sys, "rk4")
    conn = s.connection(x0, x1)
    # scan then polish, as an independent reference
    grid = np.linspace(0.02, conn.cost, 80)
    vals = [s.cost_profile(x0, x1, t).cost for t in grid]
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    ref = minimize_scalar(lambda t: s.cost_profile(x0, x1, t).cost, bounds=(lo, hi), method="bounded", options={"xatol": 1e-7})
    # the scan step is RK4_STEP_FRACTION times an upper bound on c*, so this bound is conservative
    assert abs(conn.tau_star - ref.x) <= 2 * RK4_STEP_FRACTION * conn.cost
    # scan-step integration error is ~1e-7 relative
    assert conn.cost >= ref.fun * (1 - 1e-6)
    assert conn.cost == pytest.approx(s.cost_profile(x0, x1, conn.tau_star).cost, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(t=st.floats(1e-3, 50.0), seed=st.integers(0, 2**31))
def test_cost_exceeds_time(t, seed):
    rng = np.random.default_rng(seed)
    sys = double_integrator_system()
    x0, x1 = rng.normal(size=4) * 10, rng.normal(size=4) * 10
    assert connection_cost(sys, x0, x1, t).cost > t


# -- trajectories ------------------------------------------------------------------


@pytest.mark.parametrize("backend", ["closed_form", "rk4"])
def test_trajectory_endpoints_and_cost(backend):
    sys = quadrotor_system()
    rng = np.random.default_rng(3)
    x0, x1 = rng.normal(size=10), rng.normal(size=10)
    conn = optimal_arrival_time(sys, x0, x1, backend=backend)
    traj = conn.trajectory(conn.tau_star / 4000)
    tol = 1e-8 if backend == "closed_form" else 1e-5
    np.testing.assert_allclose(traj.x[0], x0, atol=tol)
    np.testing.assert_allclose(traj.x[-1], x1, atol=tol)
    assert traj.t[0] == 0.0 and traj.t[-1] == conn.tau_star
    assert traj.running_cost(sys.R) == pytest.approx(conn.cost, rel=1e-4)


def test_trajectory_satisfies_dynamics():
    sys = LtiSystem(np.diag([1.0, 1.0], 1), [[0.0], [0.0], [1.0]], [0.0, 0.3, 0.0], [[0.5]])
    traj = connect(sys, [0.0, 0.0, 0.0], [1.0, 0.0, -1.0], sample_dt=1e-4)
    xdot = np.gradient(traj.x, traj.t, axis=0)
    rhs = traj.x @ sys.A.T + traj.u @ sys.B.T + sys.c
    np.testing.assert_allclose(xdot[5:-5], rhs[5:-5], atol=1e-5)


def test_trajectory_concatenate():
    a = Trajectory(np.array([0.0, 1.0]), np.array([[0.0], [1.0]]), np.zeros((2, 1)))
    b = Trajectory(np.array([0.0, 2.0]), np.array([[1.0], [3.0]]), np.ones((2, 1)))
    c = Trajectory.concatenate([a, b])
    np.testing.assert_array_equal(c.t, [0.0, 1.0, 3.0])
    np.testing.assert_array_equal(c.x[:, 0], [0.0, 1.0, 3.0])
    assert c.tau == 3.0


def test_sample_spacing_helpers():
    assert default_sample_dt(1e-6) == 1e-4
    assert default_sample_dt(1000.0) == 0.05
    assert default_sample_dt(2.0) == 0.02
    assert segment_count(1.0, 0.1) == 10
    assert segment_count(1.0, 0.3) == 4


# -- kernel agreement --------------------------------------------------------------


@pytest.mark.skipif(len(KERNEL_SETS) < 2, reason="compiled kernels not built")
@pytest.mark.parametrize("backend", ["closed_form", "rk4"])
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), reverse=st.booleans())
def test_kernel_sets_agree(backend, seed, reverse):
    rng = np.random.default_rng(seed)
    sys = double_integrator_system()
    k = 40 if backend == "closed_form" else 4
    X = rng.uniform([0, 0, -5, -5], [100, 100, 5, 5], size=(k, 4))
    x = rng.uniform([0, 0, -5, -5], [100, 100, 5, 5])
    py, cc = (Steer(sys, backend, kernels=name) for name in ("python", "compiled"))
    f = (lambda s: s.costs_from(x, X)) if reverse else (lambda s: s.costs_to(X, x))
    (tp, cp, _), (tc, ccost, _) = f(py), f(cc)
    np.testing.assert_allclose(cp, ccost, rtol=1e-9)
    np.testing.assert_allclose(tp, tc, rtol=1e-7, atol=1e-9)


@pytest.mark.parametrize("kernels", KERNEL_SETS)
def test_batched_matches_single(kernels):
    sys = quadrotor_system()
    rng = np.random.default_rng(4)
    X = rng.normal(size=(6, 10))
    x = rng.normal(size=10)
    s = Steer(sys, "closed_form", kernels=kernels)
    tau, cost, _ = s.costs_to(X, x)
    for i in range(6):
        conn = s.connection(X[i], x)
        assert conn.cost == pytest.approx(cost[i], rel=1e-12)
        assert conn.tau_star == pytest.approx(tau[i], rel=1e-12)
    assert np.all(np.isfinite(cost))


@pytest.mark.parametrize("kernels", KERNEL_SETS)
def test_tiny_displacement_uses_lower_time_bound(kernels):
    # the unconstrained optimum lies below tau_min, so the bound itself is optimal
    sys = double_integrator_system()
    s = Steer(sys, "closed_form", kernels=kernels)
    x0 = np.array([2.0, 1.0, 0.0, 0.0])  # at rest, so the drift stays put
    x1 = x0 + np.array([0.0, 0.0, 0.0, 6e-8])
    conn = s.connection(x0, x1)
    assert conn.tau_star == s.tau_min
    assert conn.cost == pytest.approx(s.cost_profile(x0, x1, s.tau_min).cost, rel=1e-6)
