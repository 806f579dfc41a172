"""Error-vs-lift-order sweep with CSV output and SVG plots.

    python3 scripts/run_error_sweep.py [--config configs/default.yaml] [--out runs/sweep]
"""
import sys

from se3koopman.cli import main

if __name__ == "__main__":
    sys.exit(main(["sweep", "--config", "configs/default.yaml", "--out", "runs/sweep", *sys.argv[1:]]))
