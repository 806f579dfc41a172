"""Terminal errors of the lifted model for the default and a 10x inertia vehicle.

Writes ``inertia_sensitivity.csv`` with one row per (config, time, quantity).

    python3 scripts/run_inertia_sensitivity.py [--out runs/inertia] [--jobs 3]
"""
import argparse
import csv
from pathlib import Path

from se3koopman import experiments
from se3koopman.config import load_config

CONFIGS = ("configs/default.yaml", "configs/inertia_x10.yaml")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/inertia")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for path in CONFIGS:
        cfg = load_config(path)
        ref = experiments.reference_run(cfg)
        w_env, v_env = experiments.envelope(ref)
        runs = experiments.run_orders(cfg, cfg.lift.orders(), ref, args.jobs)
        for row in experiments.summary_rows(runs, cfg.report_times):
            rows.append({"config": path, "J": " ".join(map(str, cfg.params.J)),
                         "max_omega": w_env, "max_v": v_env, **row})
    with open(out / "inertia_sensitivity.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(r["config"], r["t"], r["quantity"],
              "  ".join(f"{k}={v:.3e}" for k, v in r.items() if k.startswith("N1=")))


if __name__ == "__main__":
    main()
