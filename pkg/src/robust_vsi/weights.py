"""Frequency-dependent weights for the mixed-sensitivity design."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from functools import reduce
from typing import Optional

import numpy as np

from .lti import RationalSystem, StateSpaceSystem, cascade, is_stable, series
from .plant import PlantParams, resonant_frequency

BUTTERWORTH_ZETA = 1.0 / np.sqrt(2.0)
HARMONICS = (1, 3, 5, 7)


class WeightError(ValueError):
    pass


@dataclass(frozen=True)
class WeightConstants:
    """Weight constants; defaults give a feasible (gamma < 1), reducible design.

    A peak biquad with ``k * zeta > 1`` stops being a peak and lifts the weight
    over a whole band (up to ``2 k zeta w``), so large harmonic gains go with
    a small ``zeta``. ``k_S2 = 1`` leaves the fundamental internal model to
    ``W_d`` alone; a second resonant pair at ``w_o`` in the controller cannot
    be truncated without losing the closed loop.
    """

    k_S1_gain: float = 1.0
    k_S1_cutoff: float = 2 * np.pi * 50.0
    k_S2: float = 1.0
    k_S3: float = 3.0
    zeta: float = 0.01
    k_CS: float = 1.0
    k_CS1: float = 10.0
    k_CS2: float = 2000.0
    k_d_gain: float = 0.4
    k_d_cutoff: float = 2 * np.pi * 2000.0
    k_d1: float = 400.0
    k_d3: float = 50.0
    k_d5: float = 50.0
    k_d7: float = 80.0
    omega_r: Optional[float] = None  # None: nominal-plant LCL resonance

    @classmethod
    def from_dict(cls, doc: dict) -> "WeightConstants":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise WeightError(f"unknown weight constants: {sorted(unknown)}")
        return cls(**{k: (None if v is None else float(v)) for k, v in doc.items()})

    def to_dict(self) -> dict:
        return asdict(self)

    def k_d(self, h: int) -> float:
        return getattr(self, f"k_d{h}")


def second_order_lowpass(gain: float, cutoff: float, zeta: float = BUTTERWORTH_ZETA) -> RationalSystem:
    return RationalSystem([gain * cutoff ** 2], [1.0, 2 * zeta * cutoff, cutoff ** 2])


def peak_biquad(k: float, zeta: float, w: float) -> RationalSystem:
    """``(s^2 + 2 k zeta w s + w^2) / (s^2 + 2 zeta w s + w^2)``; gain ``k`` at ``w``."""
    return RationalSystem([1.0, 2 * k * zeta * w, w ** 2], [1.0, 2 * zeta * w, w ** 2])


def _peaks(spec, zeta) -> list[RationalSystem]:
    # a unity peak is exactly 1; leaving it out keeps the realization minimal
    return [peak_biquad(k, zeta, w) for k, w in spec if k != 1.0]


def _product(factors) -> RationalSystem:
    return reduce(series, factors)


def w_s_factors(c: WeightConstants, omega_o: float, omega_r: float) -> list[RationalSystem]:
    if c.zeta <= 0 or c.zeta >= 1:
        raise WeightError("zeta must lie in (0, 1)")
    if omega_r <= omega_o:
        raise WeightError("omega_r must exceed omega_o")
    out = [second_order_lowpass(c.k_S1_gain, c.k_S1_cutoff)]
    out += _peaks([(c.k_S2, omega_o), (c.k_S3, omega_r)], c.zeta)
    return out


def w_cs_factors(c: WeightConstants, omega_o: float) -> list[RationalSystem]:
    if not c.k_CS1 < c.k_CS2:
        raise WeightError("k_CS1 must be strictly smaller than k_CS2")
    return [RationalSystem([c.k_CS, c.k_CS * c.k_CS1 * omega_o], [1.0, c.k_CS2 * omega_o])]


def w_d_factors(c: WeightConstants, omega_o: float) -> list[RationalSystem]:
    if c.zeta <= 0 or c.zeta >= 1:
        raise WeightError("zeta must lie in (0, 1)")
    out = [second_order_lowpass(c.k_d_gain, c.k_d_cutoff)]
    out += _peaks([(c.k_d(h), h * omega_o) for h in HARMONICS], c.zeta)
    return out


def make_w_s(c: WeightConstants, omega_o: float, omega_r: float) -> RationalSystem:
    return _product(w_s_factors(c, omega_o, omega_r))


def make_w_cs(c: WeightConstants, omega_o: float) -> RationalSystem:
    return _product(w_cs_factors(c, omega_o))


def make_w_d(c: WeightConstants, omega_o: float) -> RationalSystem:
    return _product(w_d_factors(c, omega_o))


@dataclass(frozen=True)
class WeightSet:
    w_s: RationalSystem
    w_cs: RationalSystem
    w_d: RationalSystem
    constants: WeightConstants
    omega_r: float
    factors: dict = field(default_factory=dict, repr=False)

    def realization(self, name: str) -> StateSpaceSystem:
        """Well-conditioned cascade realization of one weight."""
        return cascade(self.factors[name])

    def scaled(self, name: str, k: float) -> "WeightSet":
        facs = dict(self.factors)
        facs[name] = [RationalSystem.gain(k)] + list(facs[name])
        return replace(self, **{name: getattr(self, name) * k}, factors=facs)


def nominal_omega_r(params: PlantParams) -> float:
    l_th_nom = 0.5 * (params.l_th_min + params.l_th_max)
    return 2 * np.pi * resonant_frequency(params, l_th_nom)


def make_weights(params: PlantParams, constants: WeightConstants | None = None) -> WeightSet:
    c = constants or WeightConstants()
    w_o = params.omega_o
    w_r = c.omega_r if c.omega_r is not None else nominal_omega_r(params)
    if c.zeta <= 0 or c.zeta >= 1:
        raise WeightError("zeta must lie in (0, 1)")
    # unity collapses a biquad to 1; below unity it would be a notch
    if c.k_S2 < 1 or c.k_S3 < 1:
        raise WeightError("k_S2, k_S3 must be >= 1 (peaks, not notches)")
    for h in HARMONICS:
        if c.k_d(h) < 1:
            raise WeightError(f"k_d{h} must be >= 1")
    facs = {
        "w_s": w_s_factors(c, w_o, w_r),
        "w_cs": w_cs_factors(c, w_o),
        "w_d": w_d_factors(c, w_o),
    }
    ws = WeightSet(
        w_s=_product(facs["w_s"]),
        w_cs=_product(facs["w_cs"]),
        w_d=_product(facs["w_d"]),
        constants=c,
        omega_r=w_r,
        factors=facs,
    )
    for name in ("w_s", "w_cs", "w_d"):
        if not is_stable(getattr(ws, name)):
            raise WeightError(f"{name} is not stable")
    return ws
