"""Lifted model vs. the EDMDc baseline at t = 60 s.

    python3 scripts/run_baseline_comparison.py [--config ...] [--out runs/baseline]
"""
import sys

from se3koopman.cli import main

if __name__ == "__main__":
    sys.exit(main(["compare-baseline", "--config", "configs/default.yaml", "--out", "runs/baseline",
                   *sys.argv[1:]]))
