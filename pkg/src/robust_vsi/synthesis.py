"""H-infinity machinery: CARE, H-infinity norm, output-feedback synthesis by
gamma iteration, and gridded robust-stability checks.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .lti import LTIError, StateSpaceSystem, is_stable, lft_lower, poles
from .matrix_eq import MatrixEquationError, solve_riccati
from .plant import PlantParams
from .uncertainty import GeneralizedPlant, sample_plant

log = logging.getLogger(__name__)


class SynthesisError(RuntimeError):
    pass


class InfeasibleError(SynthesisError):
    pass


class InfiniteNormError(ArithmeticError):
    pass


def solve_care(A, B, Q, R) -> np.ndarray:
    """Stabilizing solution of ``A^T X + X A - X B R^-1 B^T X + Q = 0``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if not np.allclose(R, R.T) or np.min(np.linalg.eigvalsh(R)) <= 0:
        raise MatrixEquationError("R must be symmetric positive definite")
    G = B @ np.linalg.solve(R, B.T)
    return solve_riccati(A, 0.5 * (G + G.T), 0.5 * (Q + Q.T))


# ---------------------------------------------------------------- H-infinity norm

def _sigma_max(sys: StateSpaceSystem, w: float) -> float:
    return float(np.linalg.norm(sys.evaluate(1j * w), 2))


def _balanced(sys: StateSpaceSystem) -> StateSpaceSystem:
    if sys.n == 0:
        return sys
    _, (sca, _) = sla.matrix_balance(sys.A, permute=False, separate=True)
    return StateSpaceSystem(sys.A * sca[None, :] / sca[:, None], sys.B / sca[:, None],
                            sys.C * sca[None, :], sys.D, sys.dt)


def _crossing_freqs(sys: StateSpaceSystem, gamma: float) -> np.ndarray:
    """Imaginary-axis eigenvalue frequencies of the gamma-Hamiltonian."""
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    R = gamma ** 2 * np.eye(sys.m) - D.T @ D
    Ri = np.linalg.inv(R)
    Ah = A + B @ Ri @ D.T @ C
    H = np.block([
        [Ah, B @ Ri @ B.T],
        [-C.T @ (np.eye(sys.p) + D @ Ri @ D.T) @ C, -Ah.T],
    ])
    lam = np.linalg.eigvals(H)
    near = np.abs(lam.real) <= 1e-6 * np.maximum(1.0, np.abs(lam))
    w = np.abs(lam[near].imag)
    return np.unique(np.round(w, 12))


def hinf_norm(sys: StateSpaceSystem, tol: float = 1e-4, return_freq: bool = False):
    """H-infinity norm by gamma bisection on the Hamiltonian test.

    Lower bounds always come from evaluated singular values, so the bracket is
    certified on both sides: ``lo`` from ``sigma_max(G(jw))`` and ``hi`` from a
    Hamiltonian without imaginary-axis eigenvalues.
    """
    if sys.is_discrete:
        raise LTIError("hinf_norm handles continuous systems only")
    if sys.n and not is_stable(sys):
        raise InfiniteNormError("system is unstable: infinite H-infinity norm")
    sd = float(np.linalg.norm(sys.D, 2)) if sys.D.size else 0.0
    if sys.n == 0:
        return (sd, np.inf) if return_freq else sd
    sb = _balanced(sys)
    p = poles(sb)
    cand = [0.0] + list(np.abs(p.imag)) + list(np.abs(p))
    lo, w_peak = sd, np.inf
    for w in cand:
        s = _sigma_max(sb, w)
        if s > lo:
            lo, w_peak = s, w
    if lo == 0.0:
        return (0.0, 0.0) if return_freq else 0.0
    hi = 2.0 * lo
    for _ in range(200):
        g = 0.5 * (lo + hi)
        ws = _crossing_freqs(sb, g)
        if ws.size:
            # probe the candidates and midpoints between them
            probes = np.concatenate([ws, 0.5 * (ws[1:] + ws[:-1])]) if ws.size > 1 else ws
            vals = [_sigma_max(sb, w) for w in probes]
            k = int(np.argmax(vals))
            if vals[k] >= g:
                lo, w_peak = vals[k], probes[k]
                if hi <= lo:
                    hi = 2.0 * lo
            else:
                hi = g
        else:
            hi = g
        if hi - lo <= tol * lo:
            break
    val = 0.5 * (lo + hi)
    return (val, w_peak) if return_freq else val


# ---------------------------------------------------------------- synthesis

@dataclass
class SynthesisResult:
    controller: StateSpaceSystem
    gamma_achieved: float
    iterations: int
    regularization_used: bool
    closed_loop_norm: float = float("nan")
    gamma_min: float = float("nan")
    info: dict = field(default_factory=dict)


@dataclass
class _Normalized:
    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D11: np.ndarray
    Su: np.ndarray
    Sy: np.ndarray
    m1: int
    m2: int
    p1: int
    p2: int


def _split(P: StateSpaceSystem, n_meas: int, n_ctrl: int):
    m1 = P.m - n_ctrl
    p1 = P.p - n_meas
    return (P.A, P.B[:, :m1], P.B[:, m1:], P.C[:p1], P.C[p1:],
            P.D[:p1, :m1], P.D[:p1, m1:], P.D[p1:, :m1], P.D[p1:, m1:])


def _rank(M, rtol=1e-10) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > rtol * max(1.0, s[0])))


def regularize(P: StateSpaceSystem, n_meas: int, n_ctrl: int, eps: float = 1e-6,
               z_row: int | None = None, w_col: int | None = None):
    """Add ``eps`` feedthrough where the D12/D21 rank conditions fail."""
    A, B1, B2, C1, C2, D11, D12, D21, D22 = _split(P, n_meas, n_ctrl)
    m1, p1 = B1.shape[1], C1.shape[0]
    D = P.D.copy()
    used = False
    if _rank(D12) < n_ctrl:
        rows = [z_row] if z_row is not None else list(range(p1 - n_ctrl, p1))
        for k, r in enumerate(rows[:n_ctrl]):
            D[r, m1 + k] += eps
        used = True
    if _rank(D21) < n_meas:
        cols = [w_col] if w_col is not None else list(range(m1 - n_meas, m1))
        for k, c in enumerate(cols[:n_meas]):
            D[p1 + k, c] += eps
        used = True
    return StateSpaceSystem(P.A, P.B, P.C, D), used


def _normalize(P: StateSpaceSystem, n_meas: int, n_ctrl: int) -> _Normalized:
    A, B1, B2, C1, C2, D11, D12, D21, D22 = _split(P, n_meas, n_ctrl)
    if np.any(np.abs(D22) > 0):
        raise SynthesisError("nonzero D22 is not supported")
    m1, m2, p1, p2 = B1.shape[1], B2.shape[1], C1.shape[0], C2.shape[0]
    if _rank(D12) < m2 or _rank(D21) < p2:
        raise SynthesisError("rank condition on D12/D21 fails")
    U12, s12, V12t = np.linalg.svd(D12)
    Su = V12t.T @ np.diag(1.0 / s12)
    Uz = np.hstack([U12[:, m2:], U12[:, :m2]])
    U21, s21, V21t = np.linalg.svd(D21)
    V21 = V21t.T
    Sy = np.diag(1.0 / s21) @ U21.T
    Uw = np.hstack([V21[:, p2:], V21[:, :p2]])
    return _Normalized(
        A=A, B1=B1 @ Uw, B2=B2 @ Su, C1=Uz.T @ C1, C2=Sy @ C2,
        D11=Uz.T @ D11 @ Uw, Su=Su, Sy=Sy, m1=m1, m2=m2, p1=p1, p2=p2,
    )


def _gamma_floor(N: _Normalized) -> float:
    top = N.D11[: N.p1 - N.m2, :]
    left = N.D11[:, : N.m1 - N.p2]
    vals = [0.0]
    for M in (top, left):
        if M.size:
            vals.append(np.linalg.norm(M, 2))
    return max(vals)


def _psd(X, tol=1e-9) -> bool:
    if X.size == 0:
        return True
    ev = np.linalg.eigvalsh(X)
    return ev.min() >= -tol * max(1.0, np.abs(ev).max())


def _central_controller(N: _Normalized, gamma: float):
    """Central controller at level ``gamma`` or ``None`` if infeasible.

    General-D11 two-Riccati formulas for a normalized plant with
    ``D12 = [0; I]``, ``D21 = [0, I]`` and ``D22 = 0``.
    """
    A, B1, B2, C1, C2, D11 = N.A, N.B1, N.B2, N.C1, N.C2, N.D11
    m1, m2, p1, p2 = N.m1, N.m2, N.p1, N.p2
    n = A.shape[0]
    if gamma <= _gamma_floor(N) * (1 + 1e-12):
        return None
    g2 = gamma ** 2
    D12 = np.vstack([np.zeros((p1 - m2, m2)), np.eye(m2)])
    D21 = np.hstack([np.zeros((p2, m1 - p2)), np.eye(p2)])
    B = np.hstack([B1, B2])
    C = np.vstack([C1, C2])
    D1d = np.hstack([D11, D12])
    Dd1 = np.vstack([D11, D21])
    R = D1d.T @ D1d - sla.block_diag(g2 * np.eye(m1), np.zeros((m2, m2)))
    Rt = Dd1 @ Dd1.T - sla.block_diag(g2 * np.eye(p1), np.zeros((p2, p2)))
    try:
        Ri = np.linalg.inv(R)
        Rti = np.linalg.inv(Rt)
    except np.linalg.LinAlgError:
        return None
    # X Riccati: (A - B R^-1 D1d^T C1)^T X + X(...) - X B R^-1 B^T X + C1^T (I - D1d R^-1 D1d^T) C1
    Ax = A - B @ Ri @ D1d.T @ C1
    Gx = B @ Ri @ B.T
    Qx = C1.T @ C1 - C1.T @ D1d @ Ri @ D1d.T @ C1
    Ay = A.T - C.T @ Rti @ Dd1 @ B1.T
    Gy = C.T @ Rti @ C
    Qy = B1 @ B1.T - B1 @ Dd1.T @ Rti @ Dd1 @ B1.T
    try:
        X = solve_riccati(Ax, 0.5 * (Gx + Gx.T), 0.5 * (Qx + Qx.T))
        Y = solve_riccati(Ay, 0.5 * (Gy + Gy.T), 0.5 * (Qy + Qy.T))
    except MatrixEquationError:
        return None
    if not (_psd(X) and _psd(Y)):
        return None
    rho = np.max(np.abs(np.linalg.eigvals(X @ Y))) if n else 0.0
    if rho >= g2 * (1 - 1e-9):
        return None

    F = -Ri @ (D1d.T @ C1 + B.T @ X)
    L = -(B1 @ Dd1.T + Y @ C.T) @ Rti
    F12 = F[m1 - p2:m1]
    F2 = F[m1:]
    L12 = L[:, p1 - m2:p1]
    L2 = L[:, p1:]
    a, b = p1 - m2, m1 - p2
    D1111, D1112 = D11[:a, :b], D11[:a, b:]
    D1121, D1122 = D11[a:, :b], D11[a:, b:]
    Ga = g2 * np.eye(a) - D1111 @ D1111.T
    Gb = g2 * np.eye(b) - D1111.T @ D1111
    Dh11 = -D1121 @ D1111.T @ np.linalg.solve(Ga, D1112) - D1122
    M12 = np.eye(m2) - D1121 @ np.linalg.solve(Gb, D1121.T)
    M21 = np.eye(p2) - D1112.T @ np.linalg.solve(Ga, D1112)
    try:
        Dh12 = np.linalg.cholesky(0.5 * (M12 + M12.T))
        Dh21 = np.linalg.cholesky(0.5 * (M21 + M21.T)).T
    except np.linalg.LinAlgError:
        return None
    Zi = np.eye(n) - Y @ X / g2
    try:
        Z = np.linalg.inv(Zi)
    except np.linalg.LinAlgError:
        return None
    Bh2 = Z @ (B2 + L12) @ Dh12
    Ch2 = -Dh21 @ (C2 + F12)
    Bh1 = -Z @ L2 + Bh2 @ np.linalg.solve(Dh12, Dh11)
    Ch1 = F2 + Dh11 @ np.linalg.solve(Dh21, Ch2)
    Ah = A + B @ F + Bh1 @ np.linalg.solve(Dh21, Ch2)
    K = StateSpaceSystem(Ah, Bh1, Ch1, Dh11)
    return K, X, Y


def _denormalize(K: StateSpaceSystem, N: _Normalized) -> StateSpaceSystem:
    return StateSpaceSystem(K.A, K.B @ N.Sy, N.Su @ K.C, N.Su @ K.D @ N.Sy)


def closed_loop(P: GeneralizedPlant | StateSpaceSystem, K: StateSpaceSystem,
                n_meas: int = 1, n_ctrl: int = 1) -> StateSpaceSystem:
    if isinstance(P, GeneralizedPlant):
        n_meas, n_ctrl, P = P.n_meas, P.n_ctrl, P.p
    return lft_lower(P, K, n_meas, n_ctrl)


def hinf_synthesize(P: GeneralizedPlant | StateSpaceSystem, gamma_hint: float = 10.0, *,
                    n_meas: int = 1, n_ctrl: int = 1, rel_tol: float = 1e-3,
                    backoff: float = 1.0, require_below_one: bool = True,
                    eps: float = 1e-6) -> SynthesisResult:
    """Sub-optimal H-infinity output feedback by bisection on gamma.

    Bisection runs on ``[1e-3, max(10, gamma_hint)]`` until the relative width
    drops below ``rel_tol``; the controller is built at ``backoff`` times the
    smallest feasible level found.
    """
    z_row = w_col = None
    if isinstance(P, GeneralizedPlant):
        n_meas, n_ctrl = P.n_meas, P.n_ctrl
        z_row, w_col = 3, 2  # z_cs row, i_ref column
        P = P.p
    Pr, reg = regularize(P, n_meas, n_ctrl, eps, z_row=z_row, w_col=w_col)
    if reg:
        log.warning("D12/D21 rank regularization applied (eps=%g)", eps)
    Pb = _balanced(Pr)
    N = _normalize(Pb, n_meas, n_ctrl)

    def attempt(g):
        sol = _central_controller(N, g)
        if sol is None:
            return None
        # guard against round-off in the Riccati/controller formulas
        cl = lft_lower(Pb, _denormalize(sol[0], N), n_meas, n_ctrl)
        if not is_stable(cl):
            return None
        return sol

    lo = max(1e-3, _gamma_floor(N))
    hi = max(10.0, gamma_hint)
    it = 0
    best = attempt(hi)
    while best is None:
        it += 1
        lo, hi = hi, 2 * hi
        if it > 30:
            raise InfeasibleError("no feasible gamma found")
        best = attempt(hi)
    while (hi - lo) > rel_tol * hi:
        it += 1
        g = 0.5 * (lo + hi)
        sol = attempt(g)
        if sol is None:
            lo = g
        else:
            hi, best = g, sol
    gamma_min = hi
    if require_below_one and gamma_min >= 1.0:
        raise InfeasibleError(
            f"closed-loop objective ||T_wz|| < 1 unattainable with the given weights (gamma_min={gamma_min:.4g})")
    gamma = gamma_min * backoff
    if backoff != 1.0:
        sol = attempt(gamma)
        if sol is None:
            gamma, sol = gamma_min, best
        best = sol
    K = _denormalize(best[0], N)
    cl = lft_lower(Pb, K, n_meas, n_ctrl)
    if not is_stable(cl):
        raise SynthesisError("synthesized controller does not stabilize the generalized plant")
    try:
        cl_norm = hinf_norm(cl)
    except InfiniteNormError:
        cl_norm = float("inf")
    # controller coordinates are independent of the plant state scaling
    return SynthesisResult(controller=K, gamma_achieved=gamma, iterations=it,
                           regularization_used=reg, closed_loop_norm=cl_norm,
                           gamma_min=gamma_min)


# ---------------------------------------------------------------- robust stability

@dataclass
class GridPoint:
    delta_l: float
    delta_r: float
    max_real_pole: float
    stable: bool


@dataclass
class RobustStabilityReport:
    points: list
    worst_max_real_pole: float
    passed: bool


def loop_system(plant_ss: StateSpaceSystem, K: StateSpaceSystem) -> StateSpaceSystem:
    """Closed loop ``v_inv = K (i_ref - i_inv)``; inputs (i_ref, v_th), outputs (i_inv, v_inv)."""
    A = plant_ss.A
    Bv, Bt = plant_ss.B[:, [0]], plant_ss.B[:, [1]]
    C = plant_ss.C
    n = A.shape[0]
    # generalized plant: inputs [i_ref, v_th, v_inv], outputs [i_inv, v_inv, e]
    Bg = np.hstack([np.zeros((n, 1)), Bt, Bv])
    Cg = np.vstack([C, np.zeros((1, n)), -C])
    Dg = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    return lft_lower(StateSpaceSystem(A, Bg, Cg, Dg), K, 1, 1)


def robust_stability_grid(params: PlantParams, K: StateSpaceSystem, grid) -> RobustStabilityReport:
    pts = []
    for dl, dr in grid:
        pl = sample_plant(params, dl, dr)
        cl = loop_system(pl.ss, K)
        pr = poles(cl)
        mr = float(np.max(pr.real)) if pr.size else -np.inf
        pts.append(GridPoint(dl, dr, mr, bool(mr < 0)))
    worst = max(p.max_real_pole for p in pts)
    return RobustStabilityReport(pts, worst, all(p.stable for p in pts))
