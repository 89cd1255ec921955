import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from robust_vsi.matrix_eq import (MatrixEquationError, riccati_residual, solve_lyapunov,
                                  solve_riccati)
from robust_vsi.synthesis import solve_care

from conftest import random_stable


def _care_instance(seed, n, m):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    Cq = rng.standard_normal((n, n))
    Q = Cq.T @ Cq + 1e-3 * np.eye(n)
    R = np.eye(m) + 0.1 * np.diag(rng.uniform(0, 1, m))
    return A, B, Q, R


@pytest.mark.parametrize("seed", range(10))
def test_care_matches_scipy(seed):
    A, B, Q, R = _care_instance(seed, 6, 2)
    X = solve_care(A, B, Q, R)
    Xs = sla.solve_continuous_are(A, B, Q, R)
    assert np.allclose(X, Xs, rtol=1e-7, atol=1e-9 * (1 + np.linalg.norm(Xs)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 10), m=st.integers(1, 3))
def test_care_solution_is_stabilizing_and_symmetric(seed, n, m):
    A, B, Q, R = _care_instance(seed, n, m)
    X = solve_care(A, B, Q, R)
    G = B @ np.linalg.solve(R, B.T)
    assert np.allclose(X, X.T)
    assert np.all(np.linalg.eigvals(A - G @ X).real < 0)
    assert np.linalg.norm(riccati_residual(A, G, Q, X)) <= 1e-8 * (1 + np.linalg.norm(X))


def test_care_scalar_closed_form():
    # a x + x a - x^2 b^2 / r + q = 0
    a, b, q, r = 1.0, 2.0, 3.0, 0.5
    x = (a + np.sqrt(a * a + b * b * q / r)) * r / b ** 2
    assert solve_care([[a]], [[b]], [[q]], [[r]])[0, 0] == pytest.approx(x, rel=1e-12)


def test_care_rejects_indefinite_r():
    with pytest.raises(MatrixEquationError):
        solve_care(np.eye(2), np.eye(2), np.eye(2), -np.eye(2))


def test_riccati_imaginary_axis_hamiltonian():
    # undetectable marginal mode: a = 0, q = 0 puts Hamiltonian eigenvalues at 0
    with pytest.raises(MatrixEquationError):
        solve_riccati(np.zeros((1, 1)), np.eye(1), np.zeros((1, 1)))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 12))
def test_lyapunov_matches_scipy(seed, n):
    rng = np.random.default_rng(seed)
    A, B, _, _ = random_stable(rng, n, m=2)
    Q = B @ B.T
    X = solve_lyapunov(A, Q)
    Xs = sla.solve_continuous_lyapunov(A, -Q)
    assert np.linalg.norm(A @ X + X @ A.T + Q) <= 1e-9 * (1 + np.linalg.norm(X))
    assert np.allclose(X, Xs, rtol=1e-6, atol=1e-9 * (1 + np.linalg.norm(Xs)))
    assert np.all(np.linalg.eigvalsh(X) > -1e-9 * np.linalg.norm(X))


def test_lyapunov_needs_stable_a():
    with pytest.raises(MatrixEquationError):
        solve_lyapunov(np.eye(2), np.eye(2))


def test_lyapunov_empty():
    assert solve_lyapunov(np.zeros((0, 0)), np.zeros((0, 0))).shape == (0, 0)
