"""Design the H-infinity controller and print the verification summary.

    python3 scripts/run_design.py --out runs/design [--config configs/default.json]
"""
import argparse
import json
from pathlib import Path

from robust_vsi.cli import cmd_design
from robust_vsi.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None)
    ap.add_argument("--out", default="runs/design")
    ap.add_argument("--order", type=int, default=None)
    args = ap.parse_args()

    report, code = cmd_design(load_config(args.config), Path(args.out), order=args.order)
    d = report.details
    print(f"gamma {report.gamma:.4f} (bisection floor {d['gamma_min']:.4f})")
    print(f"order {report.controller_order_full} -> {report.controller_order_reduced} "
          f"[{d['reduction_binding']}], closed-loop norm {d['closed_loop_norm_full']:.4f} -> "
          f"{d['closed_loop_norm_reduced']:.4f}")
    print("worst case over the grid:", json.dumps(d["worst_case"], indent=1))
    for k, v in report.pass_flags.items():
        print(f"  {k:24s} {'pass' if v else 'FAIL'}")
    raise SystemExit(code)


if __name__ == "__main__":
    main()
