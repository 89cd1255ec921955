"""Grid-impedance uncertainty: nominal/weight split, upper-LFT block, plant
sampling, and the generalized plant used for synthesis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lti import StateSpaceSystem, is_stable
from .plant import PlantParams, PlantRealization, build_plant
from .weights import WeightSet

INPUT_NAMES = ("w_dL", "w_dR", "i_ref", "v_th_hat", "v_inv")
# constant D-scaling of the (z_dL, z_dR) channels; keeps the i_ref -> z_delta
# path (roughly the complementary sensitivity) from dominating the norm
DEFAULT_CHANNEL_SCALING = (0.3, 0.1)
OUTPUT_NAMES = ("z_dL", "z_dR", "z_s", "z_cs", "e")


class UncertaintyError(ValueError):
    pass


@dataclass(frozen=True)
class UncertainAdmittance:
    """``1/(s L_T + R_T)`` with ``L_T = l_t_nom + w_l*delta_l`` (same for R)."""

    l_t_nom: float
    r_t_nom: float
    w_l: float
    w_r: float

    def __post_init__(self):
        if self.w_l < 0 or self.w_r < 0:
            raise UncertaintyError("uncertainty weights must be nonnegative")

    def l_t(self, delta_l: float) -> float:
        return self.l_t_nom + self.w_l * delta_l

    def r_t(self, delta_r: float) -> float:
        return self.r_t_nom + self.w_r * delta_r


def nominal_split(params: PlantParams) -> UncertainAdmittance:
    return UncertainAdmittance(
        l_t_nom=params.l_g + 0.5 * (params.l_th_max + params.l_th_min),
        r_t_nom=params.r_g + 0.5 * (params.r_th_max + params.r_th_min),
        w_l=0.5 * (params.l_th_max - params.l_th_min),
        w_r=0.5 * (params.r_th_max - params.r_th_min),
    )


def lft_m(u: UncertainAdmittance, scaling=(1.0, 1.0)) -> StateSpaceSystem:
    """One-state realization of the 3x3 block ``M``.

    Inputs ``(w_dL, w_dR, v)``, outputs ``(z_dL, z_dR, i)`` where ``v`` is the
    voltage across the uncertain branch and ``i`` its current. The state is the
    branch flux ``L_T^N i + w_L w_dL``, which absorbs the ``s*w_L`` terms.

    ``scaling = (d_L, d_R)`` applies the constant similarity
    ``diag(d) M11 diag(d)^-1`` (commutes with a diagonal ``Delta``).
    """
    if u.w_l >= u.l_t_nom:
        raise UncertaintyError("w_L must be smaller than the nominal inductance")
    d_l, d_r = scaling
    if d_l <= 0 or d_r <= 0:
        raise UncertaintyError("channel scalings must be positive")
    L, R = u.l_t_nom, u.r_t_nom
    A = [[-R / L]]
    B = [[R * u.w_l / (L * d_l), -u.w_r / d_r, 1.0]]
    c = 1.0 / L
    C = [[d_l * c], [d_r * c], [c]]
    dw = -u.w_l / (L * d_l)
    D = [[d_l * dw, 0.0, 0.0], [d_r * dw, 0.0, 0.0], [dw, 0.0, 0.0]]
    return StateSpaceSystem(A, B, C, D)


def upper_lft_value(M: np.ndarray, delta: np.ndarray) -> complex:
    """``M22 + M21 Delta (I - M11 Delta)^-1 M12`` for a 3x3 complex ``M``."""
    M11, M12, M21, M22 = M[:2, :2], M[:2, 2:], M[2:, :2], M[2:, 2:]
    Dl = np.asarray(delta)
    inner = np.linalg.solve(np.eye(2) - M11 @ Dl, M12)
    return (M22 + M21 @ Dl @ inner)[0, 0]


def f_u(u: UncertainAdmittance, delta_l: float, delta_r: float, s: complex, scaling=(1.0, 1.0)) -> complex:
    M = lft_m(u, scaling).evaluate(s)
    return upper_lft_value(M, np.diag([delta_l, delta_r]))


def _check_delta(delta_l, delta_r):
    if not (-1.0 <= delta_l <= 1.0 and -1.0 <= delta_r <= 1.0):
        raise UncertaintyError(f"delta ({delta_l}, {delta_r}) outside the unit box")


def sample_plant(params: PlantParams, delta_l: float, delta_r: float) -> PlantRealization:
    _check_delta(delta_l, delta_r)
    u = nominal_split(params)
    l_th = max(u.l_t(delta_l) - params.l_g, 0.0)
    r_th = max(u.r_t(delta_r) - params.r_g, 0.0)
    return build_plant(params, l_th, r_th)


def delta_grid(n_random: int = 8, seed: int = 0, density: int = 3) -> list[tuple[float, float]]:
    """Lattice ``density x density`` over [-1, 1]^2 plus random interior points."""
    ax = np.linspace(-1.0, 1.0, density)
    pts = [(float(a), float(b)) for a in ax for b in ax]
    rng = np.random.default_rng(seed)
    pts += [tuple(float(v) for v in rng.uniform(-1, 1, 2)) for _ in range(n_random)]
    return pts


@dataclass(frozen=True)
class GeneralizedPlant:
    p: StateSpaceSystem
    n_meas: int = 1
    n_ctrl: int = 1
    n_plant_states: int = 3
    scaling: tuple = (1.0, 1.0)

    @property
    def input_names(self):
        return INPUT_NAMES

    @property
    def output_names(self):
        return OUTPUT_NAMES


def assemble_generalized_plant(params: PlantParams, weights: WeightSet,
                               scaling=DEFAULT_CHANNEL_SCALING) -> GeneralizedPlant:
    """State-space join of LCL + uncertain admittance + weights.

    Inputs ``[w_dL, w_dR, i_ref, v_th_hat, v_inv]``, outputs
    ``[z_dL, z_dR, z_s, z_cs, e]`` with ``e = i_ref - i_inv``.
    """
    for name in ("w_s", "w_cs", "w_d"):
        if not is_stable(getattr(weights, name)):
            raise UncertaintyError(f"weight {name} is unstable")
    u = nominal_split(params)
    m = lft_m(u, scaling)
    ws, wcs, wd = (weights.realization(k) for k in ("w_s", "w_cs", "w_d"))

    n_s, n_cs, n_d = ws.n, wcs.n, wd.n
    o_s = 3
    o_cs = o_s + n_s
    o_d = o_cs + n_cs
    N = o_d + n_d
    nin = 5
    W1, W2, IR, VH, U = range(nin)
    IL, X, VC = 0, 1, 2

    def sig():
        return np.zeros(N + nin)

    # branch current i = M row 3 driven by (w_dL, w_dR, v); only x and w_dL enter
    i_sig = sig()
    i_sig[X] = m.C[2, 0]
    i_sig[N + W1] = m.D[2, 0]
    vth = sig()
    vth[o_d:o_d + n_d] = wd.C[0]
    vth[N + VH] = wd.D[0, 0]
    e = -i_sig
    e[N + IR] += 1.0

    rows = np.zeros((N, N + nin))
    l_f, r_f, c_f = params.l_f, params.r_f, params.c_f
    rows[IL, IL] = -r_f / l_f
    rows[IL, VC] = -1.0 / l_f
    rows[IL, N + U] = 1.0 / l_f
    # flux: dx/dt = A_m x + B_m [w_dL, w_dR, v], v = v_C - v_Th
    v = -vth
    v[VC] += 1.0
    rows[X, X] += m.A[0, 0]
    rows[X, N + W1] += m.B[0, 0]
    rows[X, N + W2] += m.B[0, 1]
    rows[X] += m.B[0, 2] * v
    rows[VC, IL] = 1.0 / c_f
    rows[VC] -= i_sig / c_f
    rows[o_s:o_cs, o_s:o_cs] = ws.A
    rows[o_s:o_cs] += np.outer(ws.B[:, 0], e)
    rows[o_cs:o_d, o_cs:o_d] = wcs.A
    rows[o_cs:o_d, N + U] = wcs.B[:, 0]
    rows[o_d:, o_d:N] = wd.A
    rows[o_d:, N + VH] = wd.B[:, 0]

    out = np.zeros((5, N + nin))
    zdl = sig()
    zdl[X] = m.C[0, 0]
    zdl[N + W1] = m.D[0, 0]
    zdr = sig()
    zdr[X] = m.C[1, 0]
    zdr[N + W1] = m.D[1, 0]
    out[0] = zdl
    out[1] = zdr
    out[2, o_s:o_cs] = ws.C[0]
    out[2] += ws.D[0, 0] * e
    out[3, o_cs:o_d] = wcs.C[0]
    out[3, N + U] = wcs.D[0, 0]
    out[4] = e

    P = StateSpaceSystem(rows[:, :N], rows[:, N:], out[:, :N], out[:, N:])
    return GeneralizedPlant(p=P, scaling=tuple(float(s) for s in scaling))
