"""Closed-loop tracking/admittance responses, objective checks and loop margins."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .lti import LTIError, RationalSystem, StateSpaceSystem, freq_response, log_grid
from .plant import PlantRealization

HARMONICS = (1, 3, 5, 7)


@dataclass(frozen=True)
class Thresholds:
    tracking_mag: float = 0.05    # |G(jw_o) - 1|
    tracking_phase_deg: float = 3.0
    admittance: float = 0.05      # |Y(jh w_o)| in A/V


def _siso(K, s) -> complex:
    if isinstance(K, RationalSystem):
        return complex(K(s))
    if isinstance(K, StateSpaceSystem):
        if K.is_discrete:
            raise LTIError("continuous controller expected")
        return complex(K.evaluate(s)[0, 0])
    return complex(K(s))


@dataclass(frozen=True)
class ClosedLoop:
    """Pointwise closed loop ``I_inv = G I_ref - Y V_th`` for ``v_inv = K (i_ref - i_inv)``."""

    plant: PlantRealization
    controller: object

    def loop(self, s) -> complex:
        return complex(self.plant.g_inv(s)) * _siso(self.controller, s)

    def _den(self, s) -> complex:
        d = 1.0 + self.loop(s)
        if abs(d) < 1e-14:
            raise LTIError(f"ill-posed loop at s={s}: 1 + G_inv K = 0")
        return d

    def g(self, s) -> complex:
        return self.loop(s) / self._den(s)

    def y(self, s) -> complex:
        return complex(self.plant.g_th(s)) / self._den(s)

    def response(self, omega):
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        g = np.array([self.g(1j * w) for w in omega])
        y = np.array([self.y(1j * w) for w in omega])
        return g, y


def closed_loop(plant: PlantRealization, K) -> ClosedLoop:
    return ClosedLoop(plant, K)


@dataclass
class ClosedLoopReport:
    g_at_fund: complex
    y_at_harmonics: dict
    margins: dict = field(default_factory=dict)
    pass_flags: dict = field(default_factory=dict)
    worst: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.pass_flags.values())

    def to_dict(self) -> dict:
        return {
            "g_at_fund": [self.g_at_fund.real, self.g_at_fund.imag],
            "y_at_harmonics": {str(h): [v.real, v.imag] for h, v in self.y_at_harmonics.items()},
            "margins": self.margins,
            "pass_flags": self.pass_flags,
            "worst": self.worst,
        }


def verify_objectives(plant_grid, K, omega_o: float,
                      thresholds: Thresholds = Thresholds()) -> ClosedLoopReport:
    """Worst-case tracking and admittance conditions over a list of plants.

    ``g_at_fund`` and ``y_at_harmonics`` are reported at the worst plant for
    each quantity.
    """
    plant_grid = list(plant_grid)
    if not plant_grid:
        raise ValueError("empty plant grid")
    worst_g, worst_g_err, worst_ph = None, -1.0, 0.0
    worst_y = {h: (0j, -1.0) for h in HARMONICS}
    for pl in plant_grid:
        cl = ClosedLoop(pl, K)
        g = cl.g(1j * omega_o)
        err = abs(g - 1.0)
        if err > worst_g_err:
            worst_g, worst_g_err = g, err
        worst_ph = max(worst_ph, abs(np.degrees(np.angle(g))))
        for h in HARMONICS:
            y = cl.y(1j * h * omega_o)
            if abs(y) > worst_y[h][1]:
                worst_y[h] = (y, abs(y))
    flags = {
        "tracking_magnitude": worst_g_err <= thresholds.tracking_mag,
        "tracking_phase": worst_ph <= thresholds.tracking_phase_deg,
    }
    for h in HARMONICS:
        flags[f"admittance_h{h}"] = worst_y[h][1] <= thresholds.admittance
    worst = {"g_minus_1": worst_g_err, "g_phase_deg": worst_ph}
    worst.update({f"y_h{h}": worst_y[h][1] for h in HARMONICS})
    return ClosedLoopReport(
        g_at_fund=worst_g,
        y_at_harmonics={h: worst_y[h][0] for h in HARMONICS},
        pass_flags=flags,
        worst=worst,
    )


# ---------------------------------------------------------------- margins

def _refine(f, a, b):
    try:
        return brentq(f, a, b, xtol=1e-12, rtol=1e-12, maxiter=200)
    except ValueError:
        return 0.5 * (a + b)


def margins(loop, w_min: float = 1e-2, w_max: float = 1e7, points_per_decade: int = 2000) -> dict:
    """Classical margins of a SISO loop ``L(s)``.

    Phase crossovers are where ``L(jw)`` is real and negative, gain crossovers
    where ``|L(jw)| = 1``. The reported gain/phase margins are the ones closest
    to instability (smallest in magnitude); ``crossover_hz`` is the highest
    gain crossover (the loop bandwidth). Missing crossings give ``inf``.
    """
    if isinstance(loop, (RationalSystem, StateSpaceSystem)):
        def L(w):
            return complex(freq_response(loop, [w]).value.reshape(-1)[0])
        w = log_grid(w_min, w_max, points_per_decade)
        Lw = np.asarray(freq_response(loop, w).value).reshape(-1)
    else:
        def L(w):
            return complex(loop(1j * w))
        w = log_grid(w_min, w_max, points_per_decade)
        Lw = np.array([L(x) for x in w])

    mag = np.abs(Lw)
    gains = []
    for k in np.flatnonzero(np.diff(np.sign(mag - 1.0)) != 0):
        wc = _refine(lambda x: abs(L(x)) - 1.0, w[k], w[k + 1])
        ph = np.degrees(np.angle(L(wc)))
        pm = (ph + 180.0 + 180.0) % 360.0 - 180.0
        gains.append((wc, pm))
    phases = []
    im = Lw.imag
    for k in np.flatnonzero(np.diff(np.sign(im)) != 0):
        if Lw[k].real >= 0 and Lw[k + 1].real >= 0:
            continue
        wp = _refine(lambda x: L(x).imag, w[k], w[k + 1])
        val = L(wp)
        if val.real < 0:
            phases.append((wp, -20.0 * np.log10(abs(val))))
    if gains:
        wc, pm = min(gains, key=lambda t: abs(t[1]))
        crossover = max(g[0] for g in gains) / (2 * np.pi)
    else:
        pm, crossover = float("inf"), float("inf")
    if phases:
        gm = min(phases, key=lambda t: abs(t[1]))[1]
    else:
        gm = float("inf")
    return {"gain_margin_db": float(gm), "phase_margin_deg": float(pm), "crossover_hz": float(crossover)}


# ---------------------------------------------------------------- export

def bode_rows(values, omega):
    v = np.asarray(values).reshape(-1)
    mag = 20 * np.log10(np.maximum(np.abs(v), 1e-300))
    ph = np.degrees(np.unwrap(np.angle(v)))
    return list(zip(omega, mag, ph))


def write_bode_csv(path, omega, values) -> Path:
    """CSV with columns omega_rad_s, mag_db, phase_deg (9 significant digits)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega_rad_s", "mag_db", "phase_deg"])
        for row in bode_rows(values, omega):
            w.writerow([f"{x:.9g}" for x in row])
    return path
