import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from kinorrt.dynamics import (
    LtiSystem,
    controllability_rank,
    exp_coefficients,
    is_controllable,
    matexp_poly,
    nilpotency,
)
from kinorrt.errors import BackendError, ConfigurationError
from kinorrt.scenarios import double_integrator_system, quadrotor_system

from conftest import chain_system, fig2_system, oscillator_system


def test_arrays_are_frozen_copies():
    A = np.zeros((2, 2))
    sys = LtiSystem(A, [0.0, 1.0], [0.0, 0.0], 1.0)
    A[0, 0] = 5.0
    assert sys.A[0, 0] == 0.0
    assert sys.B.shape == (2, 1) and sys.R.shape == (1, 1)
    with pytest.raises(ValueError):
        sys.A[0, 0] = 1.0


@pytest.mark.parametrize(
    "kwargs, match",
    [
        (dict(A=np.zeros((2, 3))), "square"),
        (dict(B=np.zeros((3, 1))), "rows"),
        (dict(c=np.zeros(3)), "length"),
        (dict(R=[[1.0, 0.0], [0.0, 1.0]]), "1x1"),
        (dict(R=[[-1.0]]), "positive-definite"),
        (dict(A=[[np.nan, 0.0], [0.0, 0.0]]), "non-finite"),
    ],
)
def test_validation(kwargs, match):
    base = dict(A=np.zeros((2, 2)), B=[[0.0], [1.0]], c=np.zeros(2), R=[[1.0]])
    base.update(kwargs)
    with pytest.raises(ConfigurationError, match=match):
        LtiSystem(**base)


def test_asymmetric_weight_rejected():
    with pytest.raises(ConfigurationError, match="symmetric"):
        LtiSystem(np.zeros((2, 2)), np.eye(2), np.zeros(2), [[1.0, 0.5], [0.0, 1.0]])


def test_derived_products():
    sys = LtiSystem(np.zeros((2, 2)), np.eye(2), np.zeros(2), np.diag([2.0, 4.0]))
    np.testing.assert_allclose(sys.BRB, np.diag([0.5, 0.25]))
    np.testing.assert_allclose(sys.control_gain, np.diag([0.5, 0.25]))


@pytest.mark.parametrize(
    "sys, rank",
    [
        (fig2_system(), 2),
        (double_integrator_system(), 4),
        (quadrotor_system(), 10),
        (oscillator_system(), 2),
        (LtiSystem(np.zeros((2, 2)), [[1.0], [0.0]], np.zeros(2), [[1.0]]), 1),
    ],
)
def test_controllability_rank(sys, rank):
    assert controllability_rank(sys) == rank
    assert is_controllable(sys) == (rank == sys.n)


@pytest.mark.parametrize(
    "A, index",
    [
        (np.zeros((3, 3)), 1),
        ([[0.0, 1.0], [0.0, 0.0]], 2),
        (np.diag([1.0, 1.0, 1.0], 1), 4),
        ([[0.0, 1.0], [-1.0, 0.0]], None),
        (np.eye(2), None),
    ],
)
def test_nilpotency_index(A, index):
    info = nilpotency(np.asarray(A, dtype=float))
    assert info.is_nilpotent == (index is not None)
    assert info.index == index


def test_quadrotor_is_nilpotent():
    info = nilpotency(quadrotor_system())
    assert info.is_nilpotent and info.index <= 10


def test_matexp_poly_rejects_non_nilpotent():
    with pytest.raises(BackendError):
        matexp_poly(oscillator_system(), 1.0)


def test_exp_coefficients_are_scaled_powers():
    A = np.diag([1.0, 2.0], 1)
    C = exp_coefficients(A, 3)
    np.testing.assert_array_equal(C[0], np.eye(3))
    np.testing.assert_array_equal(C[1], A)
    np.testing.assert_array_equal(C[2], A @ A / 2)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(2, 6),
    scale=st.floats(0.1, 20.0),
    t=st.floats(0.0, 5.0),
)
def test_matexp_poly_matches_expm(n, scale, t):
    sys = chain_system(n, scale)
    E = matexp_poly(sys, t)
    np.testing.assert_allclose(E, expm(sys.A * t), rtol=1e-10, atol=1e-10 * max(1.0, np.abs(E).max()))


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 2**31),
    n=st.integers(2, 6),
)
def test_similarity_preserves_nilpotency(seed, n):
    # strictly upper-triangular conjugated by a well-conditioned matrix is nilpotent with the same index
    rng = np.random.default_rng(seed)
    N = np.triu(rng.uniform(0.5, 2.0, (n, n)), 1)
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    A = Q @ N @ Q.T
    info = nilpotency(A)
    assert info.is_nilpotent
    assert info.index == nilpotency(N).index
    assert math.isclose(np.abs(np.linalg.matrix_power(A, info.index)).max(), 0.0, abs_tol=1e-9)
