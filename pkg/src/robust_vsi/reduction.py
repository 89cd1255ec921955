"""Square-root balanced truncation of stable controllers."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .lti import LTIError, StateSpaceSystem, is_stable
from .matrix_eq import MatrixEquationError, solve_lyapunov
from .synthesis import hinf_norm

log = logging.getLogger(__name__)

__all__ = [
    "HankelSpectrum", "ReductionError", "ReductionResult", "balanced_truncate",
    "error_bound", "reduce_controller", "solve_lyapunov",
]


class ReductionError(LTIError):
    pass


@dataclass(frozen=True)
class HankelSpectrum:
    singular_values: np.ndarray
    transform_condition: float

    def __post_init__(self):
        sv = np.asarray(self.singular_values, dtype=float)
        if np.any(sv < 0) or np.any(np.diff(sv) > 1e-12 * max(1.0, sv[0] if sv.size else 1.0)):
            raise ReductionError("Hankel singular values must be nonnegative and descending")
        object.__setattr__(self, "singular_values", sv)

    def tail(self, keep: int) -> float:
        return float(np.sum(self.singular_values[keep:]))


def error_bound(spectrum: HankelSpectrum, keep: int) -> float:
    """Twice the sum of the discarded Hankel singular values."""
    return 2.0 * spectrum.tail(keep)


def _psd_factor(X: np.ndarray) -> np.ndarray:
    """``L`` with ``X = L L^T``; eigenvalue form tolerates a semidefinite X."""
    w, V = np.linalg.eigh(0.5 * (X + X.T))
    w = np.clip(w, 0.0, None)
    return V * np.sqrt(w)[None, :]


def _balance(sys: StateSpaceSystem):
    A, B, C = sys.A, sys.B, sys.C
    try:
        P = solve_lyapunov(A, B @ B.T)
        Q = solve_lyapunov(A.T, C.T @ C)
    except MatrixEquationError as exc:
        raise ReductionError(str(exc)) from exc
    Lp = _psd_factor(P)
    Lq = _psd_factor(Q)
    U, s, Vt = np.linalg.svd(Lq.T @ Lp)
    return Lp, Lq, U, s, Vt


def balanced_truncate(sys: StateSpaceSystem, keep: int | None = None,
                      mode_speed_cutoff: float | None = None,
                      verify: bool = True) -> tuple[StateSpaceSystem, HankelSpectrum]:
    """Balanced truncation to ``keep`` states.

    With ``mode_speed_cutoff`` (rad/s) balanced modes whose pole magnitude
    exceeds the cutoff are dropped as well, shrinking the order further until
    the reduced model has no pole faster than the cutoff.
    The bound ``||G - Gr||_inf <= 2 * sum(dropped sv)`` is checked numerically
    when ``verify`` is set.
    """
    if sys.is_discrete:
        raise ReductionError("continuous systems only")
    if sys.n == 0:
        return sys, HankelSpectrum(np.zeros(0), 1.0)
    if not is_stable(sys):
        raise ReductionError("balanced truncation needs a stable system")
    if keep is None:
        keep = sys.n
    if keep < 0:
        raise ReductionError("keep must be nonnegative")
    Lp, Lq, U, s, Vt = _balance(sys)
    nz = s > s[0] * 1e-14 if s.size and s[0] > 0 else np.zeros(s.shape, bool)
    cond = float(s[0] / s[nz][-1]) if np.any(nz) else 1.0
    spec = HankelSpectrum(s, cond)
    keep = min(keep, int(np.sum(nz)))

    def project(k):
        if k == 0:
            return StateSpaceSystem(np.zeros((0, 0)), np.zeros((0, sys.m)),
                                    np.zeros((sys.p, 0)), sys.D)
        si = 1.0 / np.sqrt(s[:k])
        T = Lp @ Vt[:k].T * si[None, :]        # n x k
        Ti = (si[:, None] * U[:, :k].T) @ Lq.T  # k x n
        return StateSpaceSystem(Ti @ sys.A @ T, Ti @ sys.B, sys.C @ T, sys.D)

    red = project(keep)
    if mode_speed_cutoff is not None:
        while red.n and np.max(np.abs(np.linalg.eigvals(red.A))) > mode_speed_cutoff:
            keep -= 1
            red = project(keep)
    if red.n and not is_stable(red):
        raise ReductionError("truncated model lost stability (ill-conditioned balancing)")
    if verify and keep < sys.n:
        bound = error_bound(spec, keep)
        err = hinf_norm(_difference(sys, red), tol=1e-6)
        # absolute slack, widened for large bounds by the norm tolerance
        if err > bound + max(1e-6, 1e-5 * bound):
            raise ReductionError(f"truncation error {err:.3g} exceeds bound {bound:.3g}")
    return red, spec


def _difference(a: StateSpaceSystem, b: StateSpaceSystem) -> StateSpaceSystem:
    A = np.block([[a.A, np.zeros((a.n, b.n))], [np.zeros((b.n, a.n)), b.A]])
    return StateSpaceSystem(A, np.vstack([a.B, b.B]), np.hstack([a.C, -b.C]), a.D - b.D)


@dataclass
class ReductionResult:
    controller: StateSpaceSystem
    spectrum: HankelSpectrum
    order: int
    full_order: int
    bound: float
    binding: str  # "hankel_tail", "mode_speed", "forced", "closed_loop" or "skipped"
    info: dict = field(default_factory=dict)


def reduce_controller(K: StateSpaceSystem, *, accept=None, rel_tail: float = 0.01,
                      mode_speed_cutoff: float | None = None,
                      order: int | None = None) -> ReductionResult:
    """Pick the controller order.

    Default rule: the smallest order whose error bound is at most ``rel_tail``
    of ``||K||_inf`` and for which ``accept(K_r)`` holds (closed-loop
    re-verification). ``mode_speed_cutoff`` additionally removes modes faster
    than the cutoff; ``order`` forces a specific order.
    Unstable controllers are returned unchanged with a warning.
    """
    if not is_stable(K):
        log.warning("controller has unstable modes; reduction skipped")
        return ReductionResult(K, HankelSpectrum(np.zeros(0), float("nan")), K.n, K.n,
                               0.0, "skipped")
    if order is not None:
        red, spec = balanced_truncate(K, keep=order, mode_speed_cutoff=mode_speed_cutoff)
        return ReductionResult(red, spec, red.n, K.n, error_bound(spec, red.n), "forced")
    _, spec = balanced_truncate(K, verify=False)
    k_norm = hinf_norm(K)
    budget = rel_tail * k_norm
    first = next(k for k in range(K.n + 1) if error_bound(spec, k) <= budget)
    k_tail = first
    binding = "hankel_tail"
    for k in range(first, K.n + 1):
        red, spec = balanced_truncate(K, keep=k, mode_speed_cutoff=mode_speed_cutoff)
        if red.n < k:
            binding = "mode_speed"
        if accept is None or accept(red):
            if k > k_tail:
                binding = "closed_loop"
            return ReductionResult(red, spec, red.n, K.n, error_bound(spec, red.n), binding,
                                   info={"k_norm": k_norm, "tail_order": k_tail})
    raise ReductionError("no reduced order passes the closed-loop check")
