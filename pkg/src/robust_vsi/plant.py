"""Averaged single-phase LCL grid-feeding inverter model."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .lti import RationalSystem, StateSpaceSystem


class PlantError(ValueError):
    pass


@dataclass(frozen=True)
class PlantParams:
    """Ratings, LCL filter and Thevenin grid bounds (SI units).

    Parasitic resistances ``r_f``/``r_g`` are not given in the ratings table;
    the defaults add a little passive damping.
    """

    l_f: float = 2e-3
    r_f: float = 0.05
    c_f: float = 20e-6
    l_g: float = 400e-6
    r_g: float = 0.02
    l_th_min: float = 0.0
    l_th_max: float = 0.53e-3
    r_th_min: float = 0.0
    r_th_max: float = 0.05
    v_rms: float = 240.0
    s_rated: float = 11e3
    f_o: float = 60.0
    f_sw: float = 20e3
    v_dc: float = 500.0
    pf: float = 0.95

    def __post_init__(self):
        for name in ("l_f", "c_f", "l_g"):
            if getattr(self, name) <= 0:
                raise PlantError(f"{name} must be positive")
        for name in ("r_f", "r_g", "l_th_min", "r_th_min"):
            if getattr(self, name) < 0:
                raise PlantError(f"{name} must be nonnegative")
        if self.l_th_min > self.l_th_max or self.r_th_min > self.r_th_max:
            raise PlantError("grid impedance bounds out of order")
        if self.f_sw <= 10 * self.f_o:
            raise PlantError("switching frequency must exceed 10x the fundamental")
        if self.v_rms <= 0 or self.s_rated <= 0 or self.v_dc <= 0:
            raise PlantError("ratings must be positive")

    @property
    def omega_o(self) -> float:
        return 2 * np.pi * self.f_o

    @property
    def p_rated(self) -> float:
        return self.s_rated * self.pf

    @property
    def q_rated(self) -> float:
        return self.s_rated * np.sqrt(1.0 - self.pf ** 2)

    @property
    def i_rated_peak(self) -> float:
        return np.sqrt(2.0) * self.s_rated / self.v_rms

    @classmethod
    def from_dict(cls, doc: dict) -> "PlantParams":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise PlantError(f"unknown plant keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in doc.items()})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PlantRealization:
    ss: StateSpaceSystem  # states (i_L, i_inv, v_C); inputs (v_inv, v_Th); output i_inv
    g_inv: RationalSystem
    g_th: RationalSystem
    l_t: float
    r_t: float


def lcl_matrices(l_f, r_f, c_f, l_t, r_t):
    A = np.array([
        [-r_f / l_f, 0.0, -1.0 / l_f],
        [0.0, -r_t / l_t, 1.0 / l_t],
        [1.0 / c_f, -1.0 / c_f, 0.0],
    ])
    B = np.array([
        [1.0 / l_f, 0.0],
        [0.0, -1.0 / l_t],
        [0.0, 0.0],
    ])
    C = np.array([[0.0, 1.0, 0.0]])
    return A, B, C


def build_plant(params: PlantParams, l_th: float, r_th: float) -> PlantRealization:
    if l_th < 0 or r_th < 0:
        raise PlantError("grid impedance must be nonnegative")
    l_t = params.l_g + l_th
    r_t = params.r_g + r_th
    return plant_from_lt(params, l_t, r_t)


def plant_from_lt(params: PlantParams, l_t: float, r_t: float) -> PlantRealization:
    if params.l_f <= 0 or params.c_f <= 0 or l_t <= 0:
        raise PlantError("L_f, C_f and L_T must be positive")
    A, B, C = lcl_matrices(params.l_f, params.r_f, params.c_f, l_t, r_t)
    ss = StateSpaceSystem(A, B, C, np.zeros((1, 2)))
    # Z1 = L_f s + R_f, Z2 = L_T s + R_T, Yc = C_f s
    z1 = np.array([params.l_f, params.r_f])
    z2 = np.array([l_t, r_t])
    yc = np.array([params.c_f, 0.0])
    den = np.polyadd(np.polymul(np.polymul(z1, z2), yc), np.polyadd(z1, z2))
    g_inv = RationalSystem([1.0], den)
    g_th = RationalSystem(np.polyadd([1.0], np.polymul(z1, yc)), den)
    return PlantRealization(ss=ss, g_inv=g_inv, g_th=g_th, l_t=l_t, r_t=r_t)


def resonant_frequency(params: PlantParams, l_th: float) -> float:
    """Undamped LCL resonance in Hz for a given Thevenin inductance."""
    l_t = params.l_g + l_th
    if params.l_f <= 0 or params.c_f <= 0 or l_t <= 0:
        raise PlantError("L_f, L_T, C_f must be positive")
    return np.sqrt((params.l_f + l_t) / (params.l_f * l_t * params.c_f)) / (2 * np.pi)


def scr(params: PlantParams, l_th: float, r_th: float) -> float:
    """Short-circuit ratio using the Thevenin impedance at the fundamental."""
    z = np.hypot(params.omega_o * l_th, r_th)
    if z == 0.0:
        raise PlantError("zero grid impedance: infinitely stiff grid, SCR undefined")
    return params.v_rms ** 2 / (params.s_rated * z)
