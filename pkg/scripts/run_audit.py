"""Invariant audit and controllability ranks.

    python3 scripts/run_audit.py [--config ...] [--out runs/audit]
"""
import sys

from se3koopman.cli import main

if __name__ == "__main__":
    args = ["--config", "configs/default.yaml", "--out", "runs/audit", *sys.argv[1:]]
    code = main(["audit", *args])
    sys.exit(max(code, main(["controllability", *args])))
