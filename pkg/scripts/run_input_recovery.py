"""Pseudo-inverse input recovery at the configured lift orders.

    python3 scripts/run_input_recovery.py [--config ...] [--out runs/recovery]
"""
import sys

from se3koopman.cli import main

if __name__ == "__main__":
    sys.exit(main(["recover-input", "--config", "configs/default.yaml", "--out", "runs/recovery",
                   *sys.argv[1:]]))
