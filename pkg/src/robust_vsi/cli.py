"""Command-line front end: design, analyze, simulate, compare.

Exit codes: 0 pass, 1 objective failure, 2 usage or I/O error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .analysis import ClosedLoop, margins, write_bode_csv
from .config import Config, ConfigError, load_config
from .lti import LTIError, StateSpaceSystem, c2d_tustin, log_grid, ss_from_dict, ss_to_dict
from .matrix_eq import MatrixEquationError
from .pipeline import check_controller, design_grid, pr_baseline, run_design
from .plant import PlantError, build_plant
from .simulator import (ImpedanceJump, ScenarioError, SimulationError, Trace, load_scenario,
                        run_scenario, thd, tracking_rms, whole_cycle_samples)
from .synthesis import InfeasibleError, SynthesisError
from .weights import WeightError

log = logging.getLogger("robust_vsi")

EXIT_OK, EXIT_OBJECTIVE, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
STARTUP_LEAD = 0.3  # s of pre-event data kept in the metrics (the rest is PLL lock-in)
NUMERIC_ERRORS = (MatrixEquationError, LTIError, SynthesisError, SimulationError, ArithmeticError)
INPUT_ERRORS = (ConfigError, ScenarioError, PlantError, WeightError, OSError, json.JSONDecodeError)


class UsageError(Exception):
    pass


@dataclass
class DesignReport:
    gamma: float
    controller_order_full: int
    controller_order_reduced: int
    hankel_sv: list
    pass_flags: dict
    robust_grid: list
    paths: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.pass_flags.values())


# ---------------------------------------------------------------- documents

def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_json(path, doc) -> Path:
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=float) + "\n")
    return path


def controller_document(K: StateSpaceSystem, kind: str, **meta) -> dict:
    doc = {"kind": kind, "system": ss_to_dict(K)}
    doc.update(meta)
    return doc


def read_controller(path) -> tuple[StateSpaceSystem, dict]:
    doc = json.loads(Path(path).read_text())
    if "system" not in doc:
        raise UsageError(f"{path}: not a controller document")
    try:
        return ss_from_dict(doc["system"]), doc
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: malformed controller system ({exc!r})") from exc


def _discrete(K: StateSpaceSystem, cfg: Config) -> StateSpaceSystem:
    return K if K.is_discrete else c2d_tustin(K, 1.0 / cfg.plant.f_sw)


# ---------------------------------------------------------------- design / analyze

def _bode_exports(out: Path, cfg: Config, K: StateSpaceSystem, tag: str) -> dict:
    params = cfg.plant
    w = log_grid(2 * np.pi * 1.0, 2 * np.pi * 1e5, 200)
    nominal = build_plant(params, 0.5 * (params.l_th_min + params.l_th_max),
                          0.5 * (params.r_th_min + params.r_th_max))
    cl = ClosedLoop(nominal, K)
    loop = np.array([cl.loop(1j * x) for x in w])
    g, y = cl.response(w)
    kw = np.array([K.evaluate(1j * x)[0, 0] for x in w])
    paths = {}
    for name, vals in (("controller", kw), ("loop", loop), ("tracking", g), ("admittance", y)):
        p = out / f"bode_{tag}_{name}.csv"
        write_bode_csv(p, w, vals)
        paths[f"bode_{name}"] = str(p)
    return paths


def _grid_rows(robust) -> list:
    return [{"delta_l": p.delta_l, "delta_r": p.delta_r, "max_real_pole": p.max_real_pole,
             "stable": p.stable} for p in robust.points]


def _write_grid(path, robust) -> Path:
    rows = [(p.delta_l, p.delta_r, p.max_real_pole, int(p.stable)) for p in robust.points]
    return write_csv(path, ["delta_l", "delta_r", "max_real_pole", "stable"], rows)


def cmd_design(cfg: Config, out: Path, order=None, grid=None) -> tuple[DesignReport, int]:
    out.mkdir(parents=True, exist_ok=True)
    res = run_design(cfg, order=order, grid_density=grid)
    syn, red = res.synthesis, res.reduction
    kpath = out / "controller.json"
    write_json(kpath, controller_document(
        red.controller, "hinf", gamma=syn.gamma_achieved, gamma_min=syn.gamma_min,
        iterations=syn.iterations, regularized=syn.regularization_used,
        order_full=red.full_order, f_sw=cfg.plant.f_sw))
    full_path = write_json(out / "controller_full.json", controller_document(
        syn.controller, "hinf", gamma=syn.gamma_achieved, iterations=syn.iterations,
        regularized=syn.regularization_used, f_sw=cfg.plant.f_sw))
    paths = {"controller": str(kpath), "controller_full": str(full_path)}
    paths.update(_bode_exports(out, cfg, red.controller, "hinf"))
    paths["robust_grid"] = str(_write_grid(out / "robust_grid.csv", res.robust))
    report = DesignReport(
        gamma=syn.gamma_achieved,
        controller_order_full=red.full_order,
        controller_order_reduced=red.order,
        hankel_sv=[float(v) for v in red.spectrum.singular_values],
        pass_flags=res.flags,
        robust_grid=_grid_rows(res.robust),
        paths=paths,
        details={
            "gamma_min": syn.gamma_min,
            "closed_loop_norm_full": syn.closed_loop_norm,
            "closed_loop_norm_reduced": res.reduced_cl_norm,
            "reduction_binding": red.binding,
            "hankel_error_bound": red.bound,
            "worst_case": res.objectives.worst,
        },
    )
    rpath = out / "report.json"
    report.paths["report"] = str(rpath)
    write_json(rpath, asdict(report))
    return report, EXIT_OK if report.passed else EXIT_OBJECTIVE


def cmd_analyze(cfg: Config, controller_path, out: Path, grid=None) -> tuple[dict, int]:
    out.mkdir(parents=True, exist_ok=True)
    K, doc = read_controller(controller_path)
    if K.is_discrete:
        raise UsageError("analysis needs the continuous-time controller document")
    report, robust = check_controller(cfg, K, design_grid(cfg, grid))
    flags = dict(report.pass_flags)
    flags["robust_stability"] = robust.passed
    nominal = build_plant(cfg.plant, cfg.plant.l_th_min, cfg.plant.r_th_min)
    m = margins(lambda s: ClosedLoop(nominal, K).loop(s), w_min=1.0, w_max=1e6)
    result = {"kind": doc.get("kind"), "order": K.n, "pass_flags": flags,
              "worst_case": report.worst, "stiff_grid_margins": m,
              "robust_grid": _grid_rows(robust)}
    result["paths"] = _bode_exports(out, cfg, K, doc.get("kind", "controller"))
    _write_grid(out / "robust_grid.csv", robust)
    write_json(out / "analysis.json", result)
    return result, EXIT_OK if all(flags.values()) else EXIT_OBJECTIVE


# ---------------------------------------------------------------- simulate / compare

def segment_metrics(trace: Trace, sc, f0: float, lead: float = STARTUP_LEAD) -> dict:
    """Tracking RMS between consecutive events and THD of i_inv over the last cycles.

    The first window starts ``lead`` seconds before the first event so the
    PLL start-up lock is left out.
    """
    events = sc.event_times()
    first = max(trace.t[0], events[0] - lead) if events else trace.t[0]
    marks = [first] + events + [trace.t[-1] + trace.ts]
    windows = []
    for a, b in zip(marks, marks[1:]):
        if b - a >= trace.ts:
            windows.append({"t_start": a, "t_end": b, "tracking_rms": tracking_rms(trace, a, b)})
    n = whole_cycle_samples(f0, 1.0 / trace.ts, min_cycles=2)
    tail = trace.i_inv[-n:]
    try:
        thd_val = thd(tail, f0, 1.0 / trace.ts)
    except ValueError:
        thd_val = float("nan")
    return {"windows": windows, "thd_i_inv": thd_val}


def post_event_time(sc) -> float:
    """First impedance jump if any, else the first event, else the scenario start."""
    jumps = [e.t for e in sc.events if isinstance(e.kind, ImpedanceJump)]
    if jumps:
        return jumps[0]
    return sc.events[0].t if sc.events else sc.t_start


def _simulate(args):
    sc, Kd, params, opts = args
    return run_scenario(sc, Kd, params, opts)


def cmd_simulate(cfg: Config, controller_path, scenario_path, out_csv: Path) -> tuple[dict, int]:
    K, doc = read_controller(controller_path)
    sc = load_scenario(scenario_path)
    ff = bool(doc.get("feedforward_pcc", False))
    tr = run_scenario(sc, _discrete(K, cfg), cfg.plant, cfg.simulation.options(feedforward_pcc=ff))
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    tr.to_csv(out_csv)
    metrics = segment_metrics(tr, sc, cfg.plant.f_o)
    metrics["scenario"] = sc.name
    metrics["controller"] = doc.get("kind")
    write_json(out_csv.with_suffix(".metrics.json"), metrics)
    return metrics, EXIT_OK


def cmd_compare(cfg: Config, scenario_path, out: Path, controller_path=None,
                parallel: bool = True) -> tuple[dict, int]:
    sc = load_scenario(scenario_path)
    out.mkdir(parents=True, exist_ok=True)
    if controller_path is not None:
        K, _ = read_controller(controller_path)
    else:
        K = run_design(cfg).controller
    pr, C = pr_baseline(cfg)
    write_json(out / "controller_pr.json", controller_document(
        C, "pr", feedforward_pcc=pr.params.feedforward_pcc, pr=pr.params.to_dict(),
        margins=pr.margins, targets_met=pr.targets_met, notes=pr.notes, f_sw=cfg.plant.f_sw))
    jobs = [(sc, _discrete(K, cfg), cfg.plant, cfg.simulation.options(False)),
            (sc, _discrete(C, cfg), cfg.plant, cfg.simulation.options(pr.params.feedforward_pcc))]
    if parallel:
        with ProcessPoolExecutor(max_workers=2) as ex:
            traces = list(ex.map(_simulate, jobs))
    else:
        traces = [_simulate(j) for j in jobs]
    t_jump = post_event_time(sc)
    table, summary = [], {}
    for name, tr in zip(("hinf", "pr"), traces):
        tr.to_csv(out / f"trace_{name}.csv")
        m = segment_metrics(tr, sc, cfg.plant.f_o)
        summary[name] = {"post_rms": tracking_rms(tr, t_jump, tr.t[-1] + tr.ts),
                         "thd_i_inv": m["thd_i_inv"], "windows": m["windows"]}
    for wh, wp in zip(summary["hinf"]["windows"], summary["pr"]["windows"]):
        table.append((wh["t_start"], wh["t_end"], wh["tracking_rms"], wp["tracking_rms"]))
    table.append(("post", t_jump, summary["hinf"]["post_rms"], summary["pr"]["post_rms"]))
    table.append(("thd_i_inv", "", summary["hinf"]["thd_i_inv"], summary["pr"]["thd_i_inv"]))
    write_csv(out / "comparison.csv", ["t_start", "t_end", "hinf", "pr"], table)
    summary["post_event_time"] = t_jump
    summary["pr_targets_met"] = pr.targets_met
    summary["pr_margins"] = pr.margins
    write_json(out / "comparison.json", summary)
    ok = summary["hinf"]["post_rms"] < summary["pr"]["post_rms"]
    return summary, EXIT_OK if ok else EXIT_OBJECTIVE


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robust-vsi", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="synthesize, reduce and verify the H-infinity controller")
    d.add_argument("--config")
    d.add_argument("--out", required=True)
    d.add_argument("--order", type=int, help="force the reduced controller order")
    d.add_argument("--grid", type=int, help="robustness grid density per axis")

    a = sub.add_parser("analyze", help="re-run the checks on a saved controller")
    a.add_argument("--config")
    a.add_argument("--controller", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--grid", type=int)

    s = sub.add_parser("simulate", help="replay a scenario with a saved controller")
    s.add_argument("--config")
    s.add_argument("--controller", required=True)
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True, help="trace CSV path")

    c = sub.add_parser("compare", help="H-infinity vs PR on one scenario")
    c.add_argument("--config")
    c.add_argument("--controller", help="saved H-infinity controller (designed if omitted)")
    c.add_argument("--scenario", required=True)
    c.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "order", None) is not None and args.order < 0:
            raise UsageError("--order must be nonnegative")
        if getattr(args, "grid", None) is not None and args.grid < 2:
            raise UsageError("--grid must be >= 2")
        for attr in ("config", "controller", "scenario"):
            p = getattr(args, attr, None)
            if p is not None and not Path(p).is_file():
                raise UsageError(f"{attr} file not found: {p}")
        cfg = load_config(args.config)
        out = Path(args.out)
        if args.command == "design":
            rep, code = cmd_design(cfg, out, args.order, args.grid)
            print(f"gamma={rep.gamma:.4f} order {rep.controller_order_full}->{rep.controller_order_reduced}")
            for k, v in rep.pass_flags.items():
                print(f"  {k}: {'pass' if v else 'FAIL'}")
        elif args.command == "analyze":
            res, code = cmd_analyze(cfg, args.controller, out, args.grid)
            for k, v in res["pass_flags"].items():
                print(f"  {k}: {'pass' if v else 'FAIL'}")
        elif args.command == "simulate":
            res, code = cmd_simulate(cfg, args.controller, args.scenario, out)
            for w in res["windows"]:
                print(f"  [{w['t_start']:.4f}, {w['t_end']:.4f}) rms err {w['tracking_rms']:.4g} A")
            print(f"  THD(i_inv) {res['thd_i_inv']:.4g}")
        else:
            res, code = cmd_compare(cfg, args.scenario, out, args.controller)
            print(f"  post-event rms: hinf {res['hinf']['post_rms']:.4g} A, pr {res['pr']['post_rms']:.4g} A")
        return code
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OBJECTIVE
    except (UsageError, *INPUT_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
