"""Two-rate closed-loop replay: averaged LCL plant under RK4, controller and
SOGI-PLL sampled at the switching frequency, scripted grid events.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .lti import StateSpaceSystem, is_stable
from .plant import PlantParams, lcl_matrices

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("t", "i_ref", "i_inv", "err", "v_pcc", "v_inv", "v_th",
                 "p_out", "q_out", "pll_theta", "pll_vrms")
DEFAULT_HARMONICS = {3: 0.02, 5: 0.015, 7: 0.01}
TWO_PI = 2.0 * math.pi


class SimulationError(RuntimeError):
    pass


class ScenarioError(ValueError):
    pass


# ---------------------------------------------------------------- scenario

@dataclass(frozen=True)
class LoadStep:
    p_ref: float
    q_ref: float

    @classmethod
    def at_fraction(cls, params: PlantParams, fraction: float) -> "LoadStep":
        """Load step at the rated power factor, ``fraction`` of rated apparent power."""
        return cls(fraction * params.p_rated, fraction * params.q_rated)


@dataclass(frozen=True)
class VoltageSag:
    fraction: float

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.5:
            raise ScenarioError(f"voltage fraction must lie in (0, 1.5], got {self.fraction}")


@dataclass(frozen=True)
class ImpedanceJump:
    l_th: float
    r_th: float

    def __post_init__(self):
        if self.l_th < 0 or self.r_th < 0:
            raise ScenarioError("grid impedance must be nonnegative")


EventKind = Union[LoadStep, VoltageSag, ImpedanceJump]
_KIND_NAMES = {LoadStep: "load_step", VoltageSag: "voltage_sag", ImpedanceJump: "impedance_jump"}
_KIND_TYPES = {v: k for k, v in _KIND_NAMES.items()}


@dataclass(frozen=True)
class Event:
    t: float
    kind: EventKind


@dataclass(frozen=True)
class InitialCondition:
    l_th: float = 0.0
    r_th: float = 0.0
    p_ref: float = 0.0
    q_ref: float = 0.0
    v_mag_fraction: float = 1.0

    def __post_init__(self):
        if self.l_th < 0 or self.r_th < 0:
            raise ScenarioError("grid impedance must be nonnegative")
        if not 0.0 < self.v_mag_fraction <= 1.5:
            raise ScenarioError("v_mag_fraction must lie in (0, 1.5]")


@dataclass(frozen=True)
class Scenario:
    """Timed event list. ``t_start`` is the scenario clock at the first sample;
    event times use the same clock, so published timestamps can be kept."""

    name: str
    duration_s: float
    events: tuple = ()
    grid_harmonics: dict = field(default_factory=lambda: dict(DEFAULT_HARMONICS))
    initial: InitialCondition = InitialCondition()
    t_start: float = 0.0

    def __post_init__(self):
        events = tuple(self.events)
        times = [e.t for e in events]
        if times != sorted(times):
            raise ScenarioError("events must be time-sorted")
        if self.duration_s <= 0:
            raise ScenarioError("duration must be positive")
        if times and (times[0] < self.t_start or times[-1] > self.t_end):
            raise ScenarioError("scenario duration does not cover all events")
        harm = {int(h): float(f) for h, f in self.grid_harmonics.items()}
        if any(f < 0 for f in harm.values()) or any(h < 2 for h in harm):
            raise ScenarioError("harmonic fractions must be >= 0 and orders >= 2")
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "grid_harmonics", harm)

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration_s

    def event_times(self) -> list[float]:
        return sorted({e.t for e in self.events})

    def to_dict(self) -> dict:
        evs = []
        for e in self.events:
            d = {"t": e.t, "kind": _KIND_NAMES[type(e.kind)]}
            d.update(vars(e.kind))
            evs.append(d)
        return {
            "name": self.name,
            "t_start": self.t_start,
            "duration_s": self.duration_s,
            "initial": vars(self.initial).copy(),
            "grid_harmonics": {str(h): f for h, f in sorted(self.grid_harmonics.items())},
            "events": evs,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        try:
            events = []
            for d in doc.get("events", []):
                d = dict(d)
                t = float(d.pop("t"))
                kind = _KIND_TYPES[d.pop("kind")]
                events.append(Event(t, kind(**{k: float(v) for k, v in d.items()})))
            harm = doc.get("grid_harmonics", DEFAULT_HARMONICS)
            return cls(
                name=str(doc["name"]),
                duration_s=float(doc["duration_s"]),
                events=tuple(events),
                grid_harmonics={int(h): float(f) for h, f in harm.items()},
                initial=InitialCondition(**{k: float(v) for k, v in doc.get("initial", {}).items()}),
                t_start=float(doc.get("t_start", 0.0)),
            )
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"malformed scenario document: {exc!r}") from exc


def load_scenario(path) -> Scenario:
    return Scenario.from_dict(json.loads(Path(path).read_text()))


def save_scenario(sc: Scenario, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(sc.to_dict(), indent=2) + "\n")
    return path


# ---------------------------------------------------------------- PLL and reference

@dataclass(frozen=True)
class PllConfig:
    """SOGI gain and PI on the amplitude-normalized q-component.

    With the normalization the phase loop is ``s^2 + kp s + ki``; the defaults
    put its natural frequency at 20 Hz with damping 0.707.
    """

    k_sogi: float = 1.414
    kp: float = 2 * 0.707 * TWO_PI * 20.0
    ki: float = (TWO_PI * 20.0) ** 2


@dataclass(frozen=True)
class PllState:
    sogi_x1: float = 0.0     # in-phase output (v_alpha)
    sogi_x2: float = 0.0     # quadrature output (v_beta), lags by 90 deg
    pi_integrator: float = 0.0
    theta: float = 0.0
    omega_est: float = TWO_PI * 60.0
    vrms_est: float = 0.0
    v_prev: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.theta < TWO_PI:
            object.__setattr__(self, "theta", self.theta % TWO_PI)


def sogi_pll_step(state: PllState, v_pcc: float, dt: float, omega_ff: float,
                  cfg: PllConfig = PllConfig()) -> PllState:
    """Advance the frequency-adaptive SOGI-SRF-PLL by one sample.

    The SOGI is integrated with the trapezoidal rule at the current frequency
    estimate. ``theta`` is first propagated to the sample instant, then the PI
    acts on ``v_q = v_alpha cos(theta) + v_beta sin(theta)`` (zero when locked).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    w = min(max(state.omega_est, 0.5 * omega_ff), 1.5 * omega_ff)
    k = cfg.k_sogi
    # x' = [[-k w, -w], [w, 0]] x + [k w, 0] v
    h = 0.5 * dt
    a11, a12, a21 = -k * w, -w, w
    # solve (I - h A) x+ = (I + h A) x + h b (v_prev + v)
    r1 = state.sogi_x1 + h * (a11 * state.sogi_x1 + a12 * state.sogi_x2) + h * k * w * (state.v_prev + v_pcc)
    r2 = state.sogi_x2 + h * a21 * state.sogi_x1
    m11, m12, m21 = 1.0 - h * a11, -h * a12, -h * a21
    det = m11 - m12 * m21
    x1 = (r1 - m12 * r2) / det
    x2 = (m11 * r2 - m21 * r1) / det

    theta = (state.theta + state.omega_est * dt) % TWO_PI
    amp = math.hypot(x1, x2)
    vq = x1 * math.cos(theta) + x2 * math.sin(theta)
    err = vq / amp if amp > 1e-6 else 0.0
    integ = state.pi_integrator + cfg.ki * err * dt
    omega = omega_ff + cfg.kp * err + integ
    return PllState(x1, x2, integ, theta, omega, amp / math.sqrt(2.0), v_pcc)


def reference_current(p_ref: float, q_ref: float, vrms: float, theta: float,
                      last: float = 0.0) -> float:
    """Instantaneous current reference ``sqrt(2) S / V sin(theta - atan2(Q, P))``.

    Below 1 V RMS the previous value ``last`` is held (startup guard).
    """
    if vrms <= 1.0:
        return last
    if p_ref == 0.0 and q_ref == 0.0:
        return 0.0
    s = math.hypot(p_ref, q_ref)
    return math.sqrt(2.0) * s / vrms * math.sin(theta - math.atan2(q_ref, p_ref))


# ---------------------------------------------------------------- plant integration

def _rk4(A, X, b0, bm, b1, h):
    """One RK4 step of ``x' = A x + b(t)`` with ``b`` sampled at t, t+h/2, t+h.

    Works column-wise, so passing identity blocks yields the step's linear maps.
    """
    k1 = A @ X + b0
    k2 = A @ (X + 0.5 * h * k1) + bm
    k3 = A @ (X + 0.5 * h * k2) + bm
    k4 = A @ (X + h * k3) + b1
    return X + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True)
class _PeriodMap:
    """RK4 over one controller period, composed into linear maps.

    ``x_next = phi x + gam_u u + sum_h a_h (s_h sin(h w t) + c_h cos(h w t))``
    where ``u`` is held and ``v_Th`` is a sum of sinusoids sampled at every RK4
    stage time; this is the same arithmetic as stepping RK4 substep by substep.
    """

    phi: np.ndarray
    gam_u: np.ndarray
    s: dict
    c: dict
    A: np.ndarray
    B: np.ndarray
    l_t: float
    r_t: float


def _period_map(params: PlantParams, l_th: float, r_th: float, n_sub: int, h: float,
                omega_o: float, orders) -> _PeriodMap:
    l_t, r_t = params.l_g + l_th, params.r_g + r_th
    A, B, _ = lcl_matrices(params.l_f, params.r_f, params.c_f, l_t, r_t)
    I3, Z3 = np.eye(3), np.zeros((3, 3))
    F = _rk4(A, I3, Z3, Z3, Z3, h)
    G0 = _rk4(A, Z3, I3, Z3, Z3, h)
    Gm = _rk4(A, Z3, Z3, I3, Z3, h)
    G1 = _rk4(A, Z3, Z3, Z3, I3, h)
    # powers F^(n_sub-1-j), j = 0..n_sub-1
    pw = [I3]
    for _ in range(n_sub - 1):
        pw.append(F @ pw[-1])
    pw = pw[::-1]
    phi = F @ pw[0]
    bu, bt = B[:, 0], B[:, 1]
    gam_u = sum(P @ (G0 + Gm + G1) @ bu for P in pw)
    # weights of v_Th at stage times tau = j h / 2, j = 0..2 n_sub
    W = np.zeros((3, 2 * n_sub + 1))
    for j, P in enumerate(pw):
        W[:, 2 * j] += P @ G0 @ bt
        W[:, 2 * j + 1] += P @ Gm @ bt
        W[:, 2 * j + 2] += P @ G1 @ bt
    tau = 0.5 * h * np.arange(2 * n_sub + 1)
    s, c = {}, {}
    for hh in orders:
        s[hh] = W @ np.cos(hh * omega_o * tau)   # sin(w(t+tau)) = sin wt cos wtau + cos wt sin wtau
        c[hh] = W @ np.sin(hh * omega_o * tau)
    return _PeriodMap(phi, gam_u, s, c, A, B, l_t, r_t)


# ---------------------------------------------------------------- trace

@dataclass
class Trace:
    """Signals sampled at the controller rate (SI units)."""

    columns: dict
    ts: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        missing = [c for c in TRACE_COLUMNS if c not in self.columns]
        if missing:
            raise ValueError(f"trace missing columns {missing}")
        self.columns = {c: np.asarray(self.columns[c], dtype=float) for c in TRACE_COLUMNS}

    def __getattr__(self, name):
        cols = self.__dict__.get("columns", {})
        if name in cols:
            return cols[name]
        raise AttributeError(name)

    def __len__(self) -> int:
        return len(self.columns["t"])

    def window(self, t0: float, t1: float) -> np.ndarray:
        t = self.columns["t"]
        return (t >= t0 - 1e-9) & (t < t1 - 1e-9)

    def to_csv(self, path) -> Path:
        path = Path(path)
        data = np.column_stack([self.columns[c] for c in TRACE_COLUMNS])
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for row in data:
                w.writerow([f"{x:.9g}" for x in row])
        return path

    @classmethod
    def from_csv(cls, path) -> "Trace":
        with Path(path).open() as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        cols = {name: body[:, i] for i, name in enumerate(header)}
        t = cols["t"]
        ts = float(np.median(np.diff(t))) if len(t) > 1 else 0.0
        return cls(cols, ts)


# ---------------------------------------------------------------- run

@dataclass(frozen=True)
class SimOptions:
    dt_plant: float = 1e-6
    delay: bool = True            # one-sample computation delay on the controller output
    feedforward_pcc: bool = False  # add sampled v_PCC to the controller output
    pll: PllConfig = PllConfig()
    divergence_limit: float = 1e6


def _quarter_cycle_pq(t, v, i, f0):
    """``p = (v i + v' i') / 2``, ``q = (v' i - v i') / 2`` with ' a quarter-cycle delay."""
    d = 0.25 / f0
    vd = np.interp(t - d, t, v)
    idl = np.interp(t - d, t, i)
    return 0.5 * (v * i + vd * idl), 0.5 * (vd * i - v * idl)


def run_scenario(sc: Scenario, controller: StateSpaceSystem, params: PlantParams,
                 opts: SimOptions = SimOptions()) -> Trace:
    """Replay ``sc`` with ``v_inv = K (i_ref - i_inv)`` (plus optional v_PCC feed-forward)."""
    ts = 1.0 / params.f_sw
    if not controller.is_discrete:
        raise SimulationError("controller must be discrete-time")
    if abs(controller.dt - ts) > 1e-12 * ts:
        raise SimulationError(f"controller sample time {controller.dt} differs from 1/f_sw = {ts}")
    if controller.m != 1 or controller.p != 1:
        raise SimulationError("SISO controller expected")
    if not is_stable(controller):
        raise SimulationError("controller has poles on or outside the unit circle; refusing to run")
    n_sub = int(round(ts / opts.dt_plant))
    if n_sub < 1 or abs(n_sub * opts.dt_plant - ts) > 1e-9 * ts:
        raise SimulationError("dt_plant must divide the controller period")
    h = ts / n_sub

    w_o = params.omega_o
    v_pk = math.sqrt(2.0) * params.v_rms
    orders = [1] + sorted(sc.grid_harmonics)
    amp = {1: 1.0, **sc.grid_harmonics}
    n_steps = int(round(sc.duration_s / ts))

    # events keyed by controller tick (first tick at or after the event time)
    by_tick: dict[int, list] = {}
    for e in sc.events:
        k = int(math.ceil((e.t - sc.t_start) / ts - 1e-6))
        by_tick.setdefault(k, []).append(e.kind)

    ini = sc.initial
    l_th, r_th = ini.l_th, ini.r_th
    p_ref, q_ref, vfrac = ini.p_ref, ini.q_ref, ini.v_mag_fraction
    pm = _period_map(params, l_th, r_th, n_sub, h, w_o, orders)

    Ak, Bk, Ck, Dk = controller.A, controller.B[:, 0], controller.C[0], float(controller.D[0, 0])
    xk = np.zeros(controller.n)
    x = np.zeros(3)
    pll = PllState(omega_est=w_o)
    u_hold = 0.0
    i_ref = 0.0

    out = {c: np.zeros(n_steps) for c in TRACE_COLUMNS}

    def v_th_at(t):
        return vfrac * v_pk * sum(amp[hh] * math.sin(hh * w_o * t) for hh in orders)

    for k in range(n_steps):
        for kind in by_tick.get(k, ()):
            if isinstance(kind, LoadStep):
                p_ref, q_ref = kind.p_ref, kind.q_ref
            elif isinstance(kind, VoltageSag):
                vfrac = kind.fraction
            else:
                l_th, r_th = kind.l_th, kind.r_th
                pm = _period_map(params, l_th, r_th, n_sub, h, w_o, orders)
        t = k * ts
        vth = v_th_at(t)
        i_inv = x[1]
        # v_PCC = v_Th + Z_Th i_inv, with L_T di/dt = v_C - v_Th - R_T i
        v_pcc = vth + r_th * i_inv + l_th / pm.l_t * (x[2] - vth - pm.r_t * i_inv)

        pll = sogi_pll_step(pll, v_pcc, ts, w_o, opts.pll)
        i_ref = reference_current(p_ref, q_ref, pll.vrms_est, pll.theta, i_ref)
        e = i_ref - i_inv
        u_new = float(Ck @ xk) + Dk * e
        xk = Ak @ xk + Bk * e
        if opts.feedforward_pcc:
            u_new += v_pcc
        u_new = min(max(u_new, -params.v_dc), params.v_dc)
        u = u_hold if opts.delay else u_new
        u_hold = u_new

        out["t"][k] = sc.t_start + t
        out["i_ref"][k] = i_ref
        out["i_inv"][k] = i_inv
        out["err"][k] = e
        out["v_pcc"][k] = v_pcc
        out["v_inv"][k] = u
        out["v_th"][k] = vth
        out["pll_theta"][k] = pll.theta
        out["pll_vrms"][k] = pll.vrms_est

        st, ct = math.sin, math.cos
        xn = pm.phi @ x + pm.gam_u * u
        for hh in orders:
            a = vfrac * v_pk * amp[hh]
            xn += a * (st(hh * w_o * t) * pm.s[hh] + ct(hh * w_o * t) * pm.c[hh])
        x = xn
        if not np.all(np.abs(x) < opts.divergence_limit):
            raise SimulationError(
                f"plant state diverged at t={sc.t_start + t:.6f} s (|x|={np.max(np.abs(x)):.3g}); "
                f"grid L_Th={l_th:.3g} H, R_Th={r_th:.3g} ohm")

    out["p_out"], out["q_out"] = _quarter_cycle_pq(out["t"], out["v_pcc"], out["i_inv"], params.f_o)
    return Trace(out, ts, meta={"scenario": sc.name, "delay": opts.delay,
                                "dt_plant": opts.dt_plant})


# ---------------------------------------------------------------- metrics

def fourier_coefficient(signal, f0: float, fs: float, h: int = 1) -> complex:
    """Single-bin projection: ``x ~ Re(X exp(j h 2 pi f0 t))`` with t = n / fs."""
    x = np.asarray(signal, dtype=float)
    n = np.arange(x.size)
    return complex(2.0 / x.size * np.sum(x * np.exp(-1j * TWO_PI * h * f0 * n / fs)))


def _check_cycles(n: int, f0: float, fs: float):
    cycles = n * f0 / fs
    if n == 0 or abs(cycles - round(cycles)) > 1e-6 or round(cycles) < 1:
        raise ValueError(f"window of {n} samples holds {cycles:.6g} cycles, not an integer")


def whole_cycle_samples(f0: float, fs: float, min_cycles: int = 1, max_cycles: int = 1000) -> int:
    """Fewest samples, at least ``min_cycles`` periods long, holding whole cycles."""
    for c in range(min_cycles, max_cycles + 1):
        n = c * fs / f0
        if abs(n - round(n)) < 1e-6:
            return int(round(n))
    raise ValueError(f"no whole-cycle window for f0={f0}, fs={fs}")


def thd(signal, f0: float, fs: float, n_harmonics: int = 40) -> float:
    """Total harmonic distortion over harmonics 2..n_harmonics."""
    x = np.asarray(signal, dtype=float)
    _check_cycles(x.size, f0, fs)
    x1 = abs(fourier_coefficient(x, f0, fs, 1))
    if x1 == 0.0:
        raise ValueError("no fundamental component")
    hs = np.array([abs(fourier_coefficient(x, f0, fs, h)) for h in range(2, n_harmonics + 1)])
    return float(np.sqrt(np.sum(hs ** 2)) / x1)


def tracking_rms(trace: Trace, t_start: float, t_end: float) -> float:
    t = trace.t
    if t_start < t[0] - 1e-9 or t_end > t[-1] + trace.ts + 1e-9:
        raise ValueError(f"window [{t_start}, {t_end}] outside trace [{t[0]}, {t[-1]}]")
    mask = trace.window(t_start, t_end)
    if not np.any(mask):
        raise ValueError("empty window")
    return float(np.sqrt(np.mean(trace.err[mask] ** 2)))


def cycle_window(trace: Trace, t_end: float, cycles: int, f0: float) -> np.ndarray:
    """Mask of the last ``cycles`` whole fundamental periods before ``t_end``."""
    n = int(round(cycles / f0 / trace.ts))
    idx = int(np.searchsorted(trace.t, t_end - 1e-9))
    if idx - n < 0:
        raise ValueError("not enough samples before t_end")
    mask = np.zeros(len(trace), dtype=bool)
    mask[idx - n: idx] = True
    return mask


def steady_windows(sc: Scenario, settle: float, lead: float = 0.3) -> list[tuple[float, float]]:
    """Intervals between events, each starting ``settle`` seconds after an event.

    The first window covers ``lead`` seconds before the first event.
    """
    marks = sc.event_times()
    if not marks:
        return [(sc.t_start + lead, sc.t_end)]
    wins = [(marks[0] - lead, marks[0])]
    for a, b in zip(marks, marks[1:] + [sc.t_end]):
        if b - a > settle:
            wins.append((a + settle, b))
    return wins

