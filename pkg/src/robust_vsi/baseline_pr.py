"""Proportional-resonant current controller with harmonic compensators."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .analysis import margins
from .lti import RationalSystem, is_stable, tf_to_ss
from .plant import PlantParams, build_plant
from .synthesis import loop_system
from .uncertainty import delta_grid, sample_plant

log = logging.getLogger(__name__)

HARMONICS = (1, 3, 5, 7)


class PRError(ValueError):
    pass


@dataclass(frozen=True)
class PRParams:
    k_p: float = 0.01
    k_r: dict = field(default_factory=lambda: {1: 1.0, 3: 1.0, 5: 1.0, 7: 1.0})
    omega_c: float = 2 * np.pi * 2.0
    feedforward_pcc: bool = True

    def __post_init__(self):
        object.__setattr__(self, "k_p", float(self.k_p))
        object.__setattr__(self, "omega_c", float(self.omega_c))
        if self.k_p <= 0:
            raise PRError("k_p must be positive")
        if self.omega_c <= 0:
            raise PRError("omega_c must be positive")
        kr = {int(h): float(v) for h, v in self.k_r.items()}
        if any(v < 0 for v in kr.values()):
            raise PRError("resonant gains must be nonnegative")
        object.__setattr__(self, "k_r", kr)

    @classmethod
    def from_dict(cls, doc: dict) -> "PRParams":
        doc = dict(doc)
        if "k_r" in doc:
            doc["k_r"] = {int(h): float(v) for h, v in doc["k_r"].items()}
        known = {"k_p", "k_r", "omega_c", "feedforward_pcc"}
        unknown = set(doc) - known
        if unknown:
            raise PRError(f"unknown pr keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return {"k_p": float(self.k_p), "k_r": {str(h): float(v) for h, v in sorted(self.k_r.items())},
                "omega_c": float(self.omega_c), "feedforward_pcc": bool(self.feedforward_pcc)}


def resonator(k_r: float, omega_c: float, omega: float) -> RationalSystem:
    """``2 k_r w_c s / (s^2 + 2 w_c s + w^2)``; equals ``k_r`` at ``w``."""
    return RationalSystem([2 * k_r * omega_c, 0.0], [1.0, 2 * omega_c, omega ** 2])


def pr_controller(p: PRParams, omega_o: float) -> RationalSystem:
    C = RationalSystem.gain(p.k_p)
    for h, k in sorted(p.k_r.items()):
        if k > 0:
            C = C + resonator(k, p.omega_c, h * omega_o)
    return C


# ---------------------------------------------------------------- gain search

@dataclass(frozen=True)
class PRTargets:
    phase_margin_deg: float = 45.0
    gain_margin_db: float = 40.0
    crossover_hz: tuple = (1200.0, 1800.0)
    resonant_gain_db: float = 40.0


@dataclass
class PRDesign:
    params: PRParams
    margins: dict
    targets_met: bool
    robust_stable: bool
    resonant_gain: float
    notes: list = field(default_factory=list)


def _gains_for(plant, kp: float, loop_gain: float, omega_o: float) -> dict:
    # resonator sized so |G_inv (k_p + k_r)| reaches loop_gain at h*w_o
    return {h: max(loop_gain / abs(plant.g_inv(1j * h * omega_o)) - kp, 0.0) for h in HARMONICS}


def _robust(params: PlantParams, C: RationalSystem, grid) -> bool:
    Cs = tf_to_ss(C)
    return all(is_stable(loop_system(sample_plant(params, a, b).ss, Cs)) for a, b in grid)


def _meets(m: dict, t: PRTargets, gm_floor: float) -> bool:
    return m["phase_margin_deg"] >= t.phase_margin_deg and m["gain_margin_db"] >= gm_floor


def design_pr(params: PlantParams, targets: PRTargets = PRTargets(),
              omega_c: float = 2 * np.pi * 2.0, fallback_gm_db: float = 6.0,
              grid=None) -> PRDesign:
    """Scripted PR tuning at the stiff-grid corner.

    First tries the nominal recipe: ``k_p`` from the desired crossover, each
    resonator adding ``resonant_gain_db`` of loop gain. If that misses the
    margin targets, falls back to the largest resonant loop gain (and then the
    largest ``k_p``) that keeps the phase-margin target, a gain margin of at
    least ``fallback_gm_db`` and stability over the grid-impedance grid.
    """
    stiff = build_plant(params, params.l_th_min, params.r_th_min)
    w_o = params.omega_o
    grid = delta_grid() if grid is None else grid
    notes = []

    w_x = 2 * np.pi * 0.5 * (targets.crossover_hz[0] + targets.crossover_hz[1])
    kp0 = 1.0 / abs(stiff.g_inv(1j * w_x))
    A0 = 10 ** (targets.resonant_gain_db / 20)
    p0 = PRParams(k_p=kp0, k_r=_gains_for(stiff, kp0, A0, w_o), omega_c=omega_c)
    C0 = pr_controller(p0, w_o)
    m0 = margins(stiff.g_inv * C0, w_min=1.0, w_max=1e6)
    lo_x, hi_x = targets.crossover_hz
    ok0 = (_meets(m0, targets, targets.gain_margin_db)
           and lo_x <= m0["crossover_hz"] <= hi_x and _robust(params, C0, grid))
    if ok0:
        return PRDesign(p0, m0, True, True, A0)
    notes.append(f"nominal recipe k_p={kp0:.4g} misses targets: {m0}")
    log.warning("PR targets unattainable; using constrained fallback")

    best = None
    for kp in np.logspace(-3, 0, 31):
        C_p = RationalSystem.gain(kp)
        m_p = margins(stiff.g_inv * C_p, w_min=1.0, w_max=1e6)
        if not _meets(m_p, targets, fallback_gm_db) or not _robust(params, C_p, grid):
            continue
        # largest resonant loop gain keeping the constraints (bisection in dB)
        lo, hi = 0.0, targets.resonant_gain_db
        found = None
        for _ in range(12):
            mid = 0.5 * (lo + hi)
            A = 10 ** (mid / 20)
            pp = PRParams(k_p=kp, k_r=_gains_for(stiff, kp, A, w_o), omega_c=omega_c)
            C = pr_controller(pp, w_o)
            m = margins(stiff.g_inv * C, w_min=1.0, w_max=1e6)
            if _meets(m, targets, fallback_gm_db) and _robust(params, C, grid):
                lo, found = mid, (pp, m, A)
            else:
                hi = mid
        if found and (best is None or found[2] > best[2] * (1 + 1e-9)
                      or (abs(found[2] - best[2]) <= 1e-9 * best[2] and kp > best[0].k_p)):
            best = found
    if best is None:
        raise PRError("no PR gains satisfy even the fallback constraints")
    pp, m, A = best
    notes.append(f"fallback: k_p={pp.k_p:.4g}, resonant loop gain {20 * np.log10(A):.2f} dB")
    return PRDesign(pp, m, False, True, A, notes)


def pr_margins(params: PlantParams, p: PRParams) -> dict:
    """Margins of ``G_inv * C`` at the stiff-grid corner (the design point)."""
    stiff = build_plant(params, params.l_th_min, params.r_th_min)
    return margins(stiff.g_inv * pr_controller(p, params.omega_o), w_min=1.0, w_max=1e6)
