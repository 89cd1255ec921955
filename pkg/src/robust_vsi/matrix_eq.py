"""Dense Lyapunov and Riccati kernels."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla


class MatrixEquationError(ArithmeticError):
    pass


def solve_lyapunov(A, Q) -> np.ndarray:
    """Solve ``A X + X A^T + Q = 0`` for stable ``A`` (Bartels-Stewart).

    Uses the complex Schur form ``A = U T U^H`` and back-substitution on the
    columns of the transformed unknown.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    T, U = sla.schur(A, output="complex")
    lam = np.diag(T)
    if np.any(lam.real >= 0):
        raise MatrixEquationError("Lyapunov equation needs a stable A")
    F = -(U.conj().T @ Q @ U)
    Y = np.zeros((n, n), dtype=complex)
    # (Y T^H)[:, j] = sum_{k >= j} Y[:, k] conj(T[j, k])
    for j in range(n - 1, -1, -1):
        rhs = F[:, j] - Y[:, j + 1:] @ T[j, j + 1:].conj()
        M = T + np.conj(T[j, j]) * np.eye(n)
        Y[:, j] = sla.solve_triangular(M, rhs)
    X = (U @ Y @ U.conj().T).real
    return 0.5 * (X + X.T)


def riccati_from_hamiltonian(H, tol: float = 1e-10) -> np.ndarray:
    """Stabilizing solution ``X = U2 U1^-1`` from the stable invariant subspace.

    Raises when ``H`` has eigenvalues on (or numerically at) the imaginary axis
    or when the subspace is not a graph over the first block.
    """
    H = np.asarray(H, dtype=float)
    n2 = H.shape[0]
    n = n2 // 2
    if n == 0:
        return np.zeros((0, 0))
    T, Z, sdim = sla.schur(H, output="real", sort="lhp")
    lam = sla.eigvals(T)
    scale = max(1.0, np.max(np.abs(lam)))
    if np.min(np.abs(lam.real)) <= tol * scale or sdim != n:
        raise MatrixEquationError("Hamiltonian has eigenvalues on the imaginary axis")
    U1, U2 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(U1) > 1e12:
        raise MatrixEquationError("stable subspace is not complementary (U1 singular)")
    X = np.linalg.solve(U1.T, U2.T).T
    return 0.5 * (X + X.T)


def riccati_residual(A, G, Q, X) -> np.ndarray:
    """``A^T X + X A - X G X + Q``."""
    return A.T @ X + X @ A - X @ G @ X + Q


def solve_riccati(A, G, Q, refine: int = 3) -> np.ndarray:
    """Stabilizing solution of ``A^T X + X A - X G X + Q = 0`` (G, Q symmetric).

    Schur-based solve followed by Newton refinement steps; each step solves a
    Lyapunov equation with the current closed-loop matrix ``A - G X``.
    """
    A = np.asarray(A, dtype=float)
    G = np.asarray(G, dtype=float)
    Q = np.asarray(Q, dtype=float)
    H = np.block([[A, -G], [-Q, -A.T]])
    X = riccati_from_hamiltonian(H)
    for _ in range(refine):
        res = riccati_residual(A, G, Q, X)
        if np.linalg.norm(res) <= 1e-14 * (1 + np.linalg.norm(X)):
            break
        Ac = A - G @ X
        try:
            dX = solve_lyapunov(Ac.T, res)
        except MatrixEquationError:
            break
        X_new = X + dX
        X_new = 0.5 * (X_new + X_new.T)
        if np.linalg.norm(riccati_residual(A, G, Q, X_new)) < np.linalg.norm(res):
            X = X_new
        else:
            break
    return X
