"""Small LTI toolkit: SISO rational systems, MIMO state space, interconnections,
frequency response, Tustin discretization and discrete stepping.

Everything here is a pure function over immutable values.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np


class LTIError(ValueError):
    """Raised on ill-posed or singular LTI operations."""


def _as_poly(c) -> np.ndarray:
    p = np.atleast_1d(np.asarray(c, dtype=float))
    nz = np.flatnonzero(p != 0.0)
    if nz.size == 0:
        return np.zeros(1)
    return p[nz[0]:].copy()


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RationalSystem:
    """SISO transfer function num(s)/den(s), coefficients in descending powers."""

    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        num = _as_poly(self.num)
        den = _as_poly(self.den)
        if not (np.all(np.isfinite(num)) and np.all(np.isfinite(den))):
            raise LTIError("non-finite coefficients")
        if den[0] == 0.0:
            raise LTIError("zero denominator")
        if len(num) > len(den):
            raise LTIError("improper rational system")
        # normalize leading denominator coefficient
        lead = den[0]
        object.__setattr__(self, "num", _freeze(num / lead))
        object.__setattr__(self, "den", _freeze(den / lead))

    @classmethod
    def gain(cls, k: float) -> "RationalSystem":
        return cls([k], [1.0])

    @property
    def order(self) -> int:
        return len(self.den) - 1

    @property
    def relative_degree(self) -> int:
        if not np.any(self.num):
            return self.order
        return len(self.den) - len(self.num)

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def zeros(self) -> np.ndarray:
        if len(self.num) < 2:
            return np.zeros(0, dtype=complex)
        return np.roots(self.num)

    def __mul__(self, other):
        if isinstance(other, RationalSystem):
            return series(self, other)
        return RationalSystem(float(other) * self.num, self.den)

    __rmul__ = __mul__

    def __add__(self, other):
        if not isinstance(other, RationalSystem):
            other = RationalSystem.gain(float(other))
        return RationalSystem(
            np.polyadd(np.polymul(self.num, other.den), np.polymul(other.num, self.den)),
            np.polymul(self.den, other.den),
        )

    __radd__ = __add__


@dataclass(frozen=True)
class StateSpaceSystem:
    """MIMO realization; ``dt == 0`` marks a continuous-time system."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    dt: float = 0.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        if A.size == 0:
            A = np.zeros((0, 0))
        n = A.shape[0]
        p, m = D.shape
        B = np.asarray(self.B, dtype=float).reshape(n, m) if n else np.zeros((0, m))
        C = np.asarray(self.C, dtype=float).reshape(p, n) if n else np.zeros((p, 0))
        if A.shape != (n, n):
            raise LTIError(f"A must be square, got {A.shape}")
        for name, M in (("A", A), ("B", B), ("C", C), ("D", D)):
            if not np.all(np.isfinite(M)):
                raise LTIError(f"non-finite entries in {name}")
        if self.dt < 0:
            raise LTIError("sample period must be positive for discrete systems")
        for name, M in (("A", A), ("B", B), ("C", C), ("D", D)):
            object.__setattr__(self, name, _freeze(M.copy()))
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.D.shape[1]

    @property
    def p(self) -> int:
        return self.D.shape[0]

    @property
    def is_discrete(self) -> bool:
        return self.dt > 0

    def subsystem(self, outputs, inputs) -> "StateSpaceSystem":
        outputs = np.atleast_1d(outputs)
        inputs = np.atleast_1d(inputs)
        return StateSpaceSystem(self.A, self.B[:, inputs], self.C[outputs, :],
                                self.D[np.ix_(outputs, inputs)], self.dt)

    def evaluate(self, s: complex) -> np.ndarray:
        """Transfer matrix at a single complex point."""
        if self.n == 0:
            return self.D.astype(complex)
        M = s * np.eye(self.n) - self.A
        try:
            X = np.linalg.solve(M, self.B)
        except np.linalg.LinAlgError as exc:
            raise LTIError(f"singular evaluation at s={s}") from exc
        return self.C @ X + self.D


System = Union[RationalSystem, StateSpaceSystem]


@dataclass(frozen=True)
class FrequencyResponse:
    omega: np.ndarray
    value: np.ndarray  # shape (len(omega),) for SISO or (len(omega), p, m)

    def magnitude_db(self) -> np.ndarray:
        return 20.0 * np.log10(np.abs(self.value))

    def phase_deg(self) -> np.ndarray:
        return np.degrees(np.unwrap(np.angle(self.value), axis=0))


def log_grid(w_min: float, w_max: float, points_per_decade: int = 400) -> np.ndarray:
    decades = np.log10(w_max / w_min)
    n = max(2, int(np.ceil(decades * points_per_decade)) + 1)
    return np.logspace(np.log10(w_min), np.log10(w_max), n)


# ---------------------------------------------------------------- rational algebra

def series(a: RationalSystem, b: RationalSystem) -> RationalSystem:
    """Cascade two SISO systems without cancelling common factors."""
    return RationalSystem(np.polymul(a.num, b.num), np.polymul(a.den, b.den))


def feedback(loop: RationalSystem, sign: int = 1) -> RationalSystem:
    """``loop / (1 + sign*loop)``; ``sign=+1`` is negative unity feedback."""
    if sign not in (1, -1):
        raise LTIError("sign must be +1 or -1")
    num = loop.num
    den = np.polyadd(loop.den, sign * num)
    den = _as_poly(den)
    if len(den) < len(loop.den) or not np.any(den):
        # the leading coefficient cancelled: 1 + sign*loop(inf) == 0
        raise LTIError("ill-posed feedback interconnection (algebraic loop)")
    return RationalSystem(num, den)


# ---------------------------------------------------------------- realizations

def tf_to_ss(sys: RationalSystem) -> StateSpaceSystem:
    """Controllable-canonical realization of a proper SISO system.

    The companion form is built in the frequency-scaled variable
    ``s / alpha`` (alpha = geometric mean root magnitude) and mapped back, so
    high-order weights with widely spread coefficients stay well conditioned.
    For monic first-order systems with unit root magnitude this is the plain
    textbook form.
    """
    if not isinstance(sys, RationalSystem):
        raise LTIError("tf_to_ss expects a RationalSystem")
    n = sys.order
    num = np.concatenate([np.zeros(n + 1 - len(sys.num)), sys.num])
    den = sys.den
    d0 = num[0]
    if n == 0:
        return StateSpaceSystem(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[d0]])
    r = num[1:] - d0 * den[1:]  # strictly proper remainder, degree < n
    alpha = abs(den[-1]) ** (1.0 / n) if den[-1] != 0 else 1.0
    if not np.isfinite(alpha) or alpha <= 0:
        alpha = 1.0
    k = np.arange(1, n + 1)
    a_sc = den[1:] / alpha ** k
    r_sc = r / alpha ** k
    A = np.zeros((n, n))
    A[0, :] = -a_sc
    if n > 1:
        A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = r_sc.reshape(1, n)
    # s = alpha*sigma: (sI - alpha*A)^-1 = (1/alpha)(sigma I - A)^-1
    return StateSpaceSystem(alpha * A, alpha * B, C, [[d0]])


def ss_to_tf(sys: StateSpaceSystem, out: int = 0, inp: int = 0) -> RationalSystem:
    """SISO channel of a state-space system as a rational function."""
    if sys.n == 0:
        return RationalSystem.gain(sys.D[out, inp])
    den = np.real(np.poly(sys.A))
    b = sys.B[:, [inp]]
    c = sys.C[[out], :]
    # num = det(sI - A + b c) - det(sI - A) + d*det(sI - A)
    num = np.real(np.poly(sys.A - b @ c)) - den + sys.D[out, inp] * den
    return RationalSystem(num, den)


def ss_series(first: StateSpaceSystem, second: StateSpaceSystem) -> StateSpaceSystem:
    """``second`` driven by the output of ``first``."""
    if first.p != second.m:
        raise LTIError("dimension mismatch in series connection")
    n1, n2 = first.n, second.n
    A = np.block([[first.A, np.zeros((n1, n2))],
                  [second.B @ first.C, second.A]])
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    D = second.D @ first.D
    return StateSpaceSystem(A, B, C, D, first.dt)


def cascade(factors: Sequence[RationalSystem]) -> StateSpaceSystem:
    """Cascade realization of a product of low-order factors."""
    out = tf_to_ss(factors[0])
    for f in factors[1:]:
        out = ss_series(out, tf_to_ss(f))
    return out


def lft_lower(P: StateSpaceSystem, K: StateSpaceSystem, n_meas: int, n_ctrl: int) -> StateSpaceSystem:
    """Lower LFT: close ``u = K y`` on the last ``n_ctrl`` inputs / ``n_meas`` outputs."""
    m1 = P.m - n_ctrl
    p1 = P.p - n_meas
    A, B1, B2 = P.A, P.B[:, :m1], P.B[:, m1:]
    C1, C2 = P.C[:p1], P.C[p1:]
    D11, D12 = P.D[:p1, :m1], P.D[:p1, m1:]
    D21, D22 = P.D[p1:, :m1], P.D[p1:, m1:]
    Ak, Bk, Ck, Dk = K.A, K.B, K.C, K.D
    R = np.eye(n_ctrl) - Dk @ D22
    try:
        Ri = np.linalg.inv(R)
    except np.linalg.LinAlgError as exc:
        raise LTIError("ill-posed LFT interconnection") from exc
    S = np.eye(n_meas) - D22 @ Dk
    Si = np.linalg.inv(S)
    Acl = np.block([
        [A + B2 @ Ri @ Dk @ C2, B2 @ Ri @ Ck],
        [Bk @ Si @ C2, Ak + Bk @ Si @ D22 @ Ck],
    ])
    Bcl = np.vstack([B1 + B2 @ Ri @ Dk @ D21, Bk @ Si @ D21])
    Ccl = np.hstack([C1 + D12 @ Ri @ Dk @ C2, D12 @ Ri @ Ck])
    Dcl = D11 + D12 @ Ri @ Dk @ D21
    return StateSpaceSystem(Acl, Bcl, Ccl, Dcl, P.dt)


# ---------------------------------------------------------------- analysis

def freq_response(sys: System, omega, chunk: int = 2048) -> FrequencyResponse:
    """Evaluate ``sys`` at ``s = j*omega`` (or ``z = exp(j*omega*dt)``)."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if not np.all(np.isfinite(omega)):
        raise LTIError("non-finite frequency")
    if isinstance(sys, RationalSystem):
        s = 1j * omega
        den = np.polyval(sys.den, s)
        if np.any(den == 0):
            raise LTIError("frequency coincides with a pole")
        return FrequencyResponse(omega, np.polyval(sys.num, s) / den)
    pts = np.exp(1j * omega * sys.dt) if sys.is_discrete else 1j * omega
    n = sys.n
    out = np.empty((len(omega), sys.p, sys.m), dtype=complex)
    if n == 0:
        out[:] = sys.D
    else:
        I = np.eye(n)
        for k0 in range(0, len(omega), chunk):
            s = pts[k0:k0 + chunk]
            M = s[:, None, None] * I - sys.A
            try:
                X = np.linalg.solve(M, np.broadcast_to(sys.B, (len(s),) + sys.B.shape))
            except np.linalg.LinAlgError as exc:
                raise LTIError("frequency coincides with a pole") from exc
            out[k0:k0 + chunk] = sys.C @ X + sys.D
    if sys.p == 1 and sys.m == 1:
        out = out[:, 0, 0]
    return FrequencyResponse(omega, out)


def poles(sys: System) -> np.ndarray:
    if isinstance(sys, RationalSystem):
        if sys.order == 0:
            return np.zeros(0, dtype=complex)
        return np.roots(sys.den).astype(complex)
    if sys.n == 0:
        return np.zeros(0, dtype=complex)
    try:
        return np.linalg.eigvals(sys.A).astype(complex)
    except np.linalg.LinAlgError as exc:
        raise LTIError("eigenvalue solver did not converge") from exc


def is_stable(sys: System, margin: float = 0.0) -> bool:
    """Strict stability: open left half plane, or open unit disc if discrete."""
    p = poles(sys)
    if p.size == 0:
        return True
    if isinstance(sys, StateSpaceSystem) and sys.is_discrete:
        return bool(np.all(np.abs(p) < 1.0 - margin))
    return bool(np.all(p.real < -margin))


def dc_gain(sys: System) -> np.ndarray:
    if isinstance(sys, RationalSystem):
        return sys(0.0)
    z = 1.0 if sys.is_discrete else 0.0
    return sys.evaluate(z)


# ---------------------------------------------------------------- discrete time

def c2d_tustin(sys: StateSpaceSystem, dt: float) -> StateSpaceSystem:
    """Bilinear (Tustin) discretization."""
    if sys.is_discrete:
        raise LTIError("system is already discrete")
    if dt <= 0:
        raise LTIError("sample period must be positive")
    n = sys.n
    if n == 0:
        return StateSpaceSystem(sys.A, sys.B, sys.C, sys.D, dt)
    M = np.eye(n) - 0.5 * dt * sys.A
    if np.linalg.cond(M) > 1e14:
        raise LTIError("singular (I - dt/2 A) in Tustin map")
    Ad = np.linalg.solve(M, np.eye(n) + 0.5 * dt * sys.A)
    Bd = np.linalg.solve(M, dt * sys.B)
    Cd = np.linalg.solve(M.T, sys.C.T).T
    Dd = sys.D + 0.5 * sys.C @ Bd
    return StateSpaceSystem(Ad, Bd, Cd, Dd, dt)


def lsim_step(sys: StateSpaceSystem, state, u):
    """One step of a discrete system; returns ``(next_state, y)``."""
    if not sys.is_discrete:
        raise LTIError("lsim_step needs a discrete system")
    x = np.asarray(state, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.shape[0] != sys.n or u.shape[0] != sys.m:
        raise LTIError(f"dimension mismatch: state {x.shape[0]} vs {sys.n}, input {u.shape[0]} vs {sys.m}")
    y = sys.C @ x + sys.D @ u
    return sys.A @ x + sys.B @ u, y


# ---------------------------------------------------------------- persistence

def ss_to_dict(sys: StateSpaceSystem) -> dict:
    return {
        "n": sys.n,
        "m": sys.m,
        "p": sys.p,
        "time_domain": "discrete" if sys.is_discrete else "continuous",
        "ts": sys.dt,
        "a": sys.A.tolist(),
        "b": sys.B.tolist(),
        "c": sys.C.tolist(),
        "d": sys.D.tolist(),
    }


def ss_from_dict(doc: dict) -> StateSpaceSystem:
    n, m, p = int(doc["n"]), int(doc["m"]), int(doc["p"])
    ts = float(doc.get("ts", 0.0))
    if doc.get("time_domain", "continuous") == "continuous":
        ts = 0.0
    elif ts <= 0:
        raise LTIError("discrete system document needs ts > 0")

    def mat(key, shape):
        return np.asarray(doc[key], dtype=float).reshape(shape)

    return StateSpaceSystem(mat("a", (n, n)), mat("b", (n, m)), mat("c", (p, n)), mat("d", (p, m)), ts)


def save_ss(sys: StateSpaceSystem, path, **extra) -> Path:
    doc = ss_to_dict(sys)
    doc.update(extra)
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def load_ss(path) -> tuple[StateSpaceSystem, dict]:
    doc = json.loads(Path(path).read_text())
    return ss_from_dict(doc), doc
