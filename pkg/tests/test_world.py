import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinorrt._backend import get_kernels
from kinorrt.errors import ConfigurationError
from kinorrt.steer import Trajectory
from kinorrt.world import Box, Environment, wrap_angle

from conftest import KERNEL_SETS


def planar_env(**kw):
    base = dict(
        state_lower=[0.0, 0.0, -1.0, -1.0],
        state_upper=[10.0, 10.0, 1.0, 1.0],
        control_lower=[-1.0, -1.0],
        control_upper=[1.0, 1.0],
        obstacles=(Box([4.0, 4.0], [6.0, 6.0]),),
        position_dims=(0, 1),
        robot_radius=0.5,
    )
    base.update(kw)
    return Environment(**base)


def test_wrap_angle_range():
    v = wrap_angle(np.array([-4 * math.pi, -math.pi, 0.0, math.pi, 7.0]))
    assert np.all(v >= -math.pi) and np.all(v < math.pi)
    np.testing.assert_allclose(np.sin(v), np.sin([-4 * math.pi, -math.pi, 0.0, math.pi, 7.0]), atol=1e-12)


def test_box_validation_and_distance():
    with pytest.raises(ConfigurationError):
        Box([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(ConfigurationError):
        Box([0.0], [math.inf])
    b = Box([0.0, 0.0], [1.0, 1.0])
    assert b.distance(np.array([0.5, 0.5])) == 0.0
    assert b.distance(np.array([4.0, 5.0])) == pytest.approx(5.0)
    s = b.scaled(2.0)
    np.testing.assert_allclose(s.lower, [-0.5, -0.5])
    np.testing.assert_allclose(s.upper, [1.5, 1.5])


def test_environment_validation():
    with pytest.raises(ConfigurationError, match="position_dims"):
        planar_env(position_dims=(0, 7))
    with pytest.raises(ConfigurationError, match="obstacle dimension"):
        planar_env(obstacles=(Box([1.0], [2.0]),))
    with pytest.raises(ConfigurationError, match="lower bounds"):
        planar_env(state_lower=[11.0, 0.0, -1.0, -1.0])
    with pytest.raises(ConfigurationError, match="robot_radius"):
        planar_env(robot_radius=-1.0)


def test_point_checks():
    env = planar_env()
    assert env.state_free([1.0, 1.0, 0.0, 0.0])
    assert not env.state_free([5.0, 5.0, 0.0, 0.0])  # inside box
    assert not env.state_free([3.6, 5.0, 0.0, 0.0])  # within radius of box
    assert env.state_free([3.4, 5.0, 0.0, 0.0])
    assert not env.state_free([1.0, 1.0, 2.0, 0.0])  # velocity out of bounds
    assert env.control_free([0.5, -1.0]) and not env.control_free([1.5, 0.0])


def test_angle_dims_wrap_before_bounds():
    env = Environment([-math.pi], [math.pi], [-1.0], [1.0], angle_dims=(0,))
    assert env.in_bounds([3 * math.pi / 2])


def test_trajectory_free():
    env = planar_env()
    t = np.linspace(0.0, 1.0, 5)
    x = np.column_stack([np.linspace(1, 9, 5), np.full(5, 1.0), np.zeros(5), np.zeros(5)])
    assert env.trajectory_free(Trajectory(t, x, np.zeros((5, 2))))
    assert not env.trajectory_free(Trajectory(t, x, np.full((5, 2), 2.0)))
    x[2, 1] = 5.0
    assert not env.trajectory_free(Trajectory(t, x, np.zeros((5, 2))))


@pytest.mark.parametrize("kernels", KERNEL_SETS)
@settings(max_examples=60, deadline=None)
@given(pts=st.lists(st.tuples(*[st.floats(-2.0, 12.0)] * 4), min_size=1, max_size=20))
def test_kernel_sweep_matches_states_free(kernels, pts):
    env = planar_env()
    Z = np.zeros((len(pts), 8))  # (x, y) rows with zero costate, so u = 0
    Z[:, :4] = np.array(pts)
    Ku = np.zeros((2, 4))
    expect = bool(np.all(env.states_free(Z[:, :4])))
    assert get_kernels(kernels).samples_free(Z, Ku, env.kernel_args) == expect


@settings(max_examples=60, deadline=None)
@given(X=st.lists(st.tuples(*[st.floats(-2.0, 12.0)] * 4), min_size=1, max_size=10))
def test_states_free_matches_pointwise(X):
    env = planar_env()
    np.testing.assert_array_equal(env.states_free(X), [env.state_free(x) for x in X])


def test_with_obstacles_and_equals():
    env = planar_env()
    other = env.with_obstacles([])
    assert not env.equals(other)
    assert other.equals(planar_env(obstacles=()))
