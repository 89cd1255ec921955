"""Bode data of the closed loops over the grid-impedance corners.

One CSV per (corner, response) with columns omega_rad_s, mag_db, phase_deg,
for the designed H-infinity controller and the PR baseline.

    python3 scripts/export_bode.py --out runs/bode
"""
import argparse
from pathlib import Path

import numpy as np

from robust_vsi.analysis import ClosedLoop, write_bode_csv
from robust_vsi.config import load_config
from robust_vsi.lti import log_grid
from robust_vsi.pipeline import pr_baseline, run_design
from robust_vsi.uncertainty import sample_plant

CORNERS = {"stiff": (-1.0, -1.0), "nominal": (0.0, 0.0), "weak": (1.0, 1.0)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None)
    ap.add_argument("--out", default="runs/bode")
    args = ap.parse_args()
    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    _, C = pr_baseline(cfg)
    controllers = {"hinf": run_design(cfg).controller, "pr": C}
    w = log_grid(2 * np.pi * 1.0, 2 * np.pi * 1e5, 200)
    for cname, K in controllers.items():
        for corner, (dl, dr) in CORNERS.items():
            cl = ClosedLoop(sample_plant(cfg.plant, dl, dr), K)
            g, y = cl.response(w)
            write_bode_csv(out / f"{cname}_{corner}_tracking.csv", w, g)
            write_bode_csv(out / f"{cname}_{corner}_admittance.csv", w, y)
            s = 1j * cfg.plant.omega_o
            print(f"{cname:4s} {corner:7s} |G(jw_o)| {abs(cl.g(s)):.4f}, "
                  f"|Y(jw_o)| {abs(cl.y(s)):.4g} A/V")


if __name__ == "__main__":
    main()
