"""Run the scripted PR gain search and record the gains in a config file.

    python3 scripts/tune_pr.py --write configs/default.json
"""
import argparse
from dataclasses import replace

from robust_vsi.baseline_pr import design_pr
from robust_vsi.config import load_config, save_config
from robust_vsi.pipeline import design_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None)
    ap.add_argument("--write", default=None, help="config path to store the tuned gains in")
    args = ap.parse_args()
    cfg = load_config(args.config)

    d = design_pr(cfg.plant, omega_c=cfg.pr.omega_c, fallback_gm_db=cfg.pr.fallback_gm_db,
                  grid=design_grid(cfg))
    print(f"k_p = {d.params.k_p:.6g}")
    for h, k in sorted(d.params.k_r.items()):
        print(f"k_r{h} = {k:.6g}")
    m = d.margins
    print(f"PM {m['phase_margin_deg']:.2f} deg, GM {m['gain_margin_db']:.2f} dB, "
          f"crossover {m['crossover_hz']:.0f} Hz, targets met: {d.targets_met}")
    for note in d.notes:
        print("note:", note)
    if args.write:
        save_config(replace(cfg, pr=replace(cfg.pr, params=d.params)), args.write)
        print("wrote", args.write)


if __name__ == "__main__":
    main()
