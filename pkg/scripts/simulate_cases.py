"""Replay the three shipped scenarios with the H-infinity and PR controllers.

Writes one trace CSV per (case, controller) plus a summary table.

    python3 scripts/simulate_cases.py --out runs/cases
"""
import argparse
from pathlib import Path

from robust_vsi.cli import post_event_time, segment_metrics, write_csv
from robust_vsi.config import load_config
from robust_vsi.pipeline import discretize, pr_baseline, run_design
from robust_vsi.simulator import load_scenario, run_scenario, tracking_rms

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None)
    ap.add_argument("--out", default="runs/cases")
    args = ap.parse_args()
    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    controllers = {"hinf": (discretize(run_design(cfg).controller, cfg), False)}
    pr, C = pr_baseline(cfg)
    controllers["pr"] = (discretize(C, cfg), pr.params.feedforward_pcc)

    rows = []
    for case in ("case1", "case2", "case3"):
        sc = load_scenario(ROOT / "configs" / "scenarios" / f"{case}.json")
        t_post = post_event_time(sc)
        for name, (K, ff) in controllers.items():
            tr = run_scenario(sc, K, cfg.plant, cfg.simulation.options(feedforward_pcc=ff))
            tr.to_csv(out / f"{case}_{name}.csv")
            m = segment_metrics(tr, sc, cfg.plant.f_o)
            worst = max(w["tracking_rms"] for w in m["windows"])
            post = tracking_rms(tr, t_post, tr.t[-1] + tr.ts)
            rows.append((case, name, worst, post, m["thd_i_inv"]))
            print(f"{case} {name:4s} worst window rms {worst:8.3f} A, post-event rms {post:8.3f} A, "
                  f"THD {m['thd_i_inv']:.4f}")
    write_csv(out / "summary.csv", ["case", "controller", "worst_window_rms", "post_event_rms",
                                     "thd_i_inv"], rows)


if __name__ == "__main__":
    main()
