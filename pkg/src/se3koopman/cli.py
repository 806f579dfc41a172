"""Command line entry point: ``se3koopman <command> [--config ...]``.

Exit codes: 0 success, 1 audit (or comparison) failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analysis, experiments
from .config import ConfigError, dump_config, load_config
from .dynamics import write_trajectory_csv
from .lift import assemble_A, selector_B, state_labels

log = logging.getLogger("se3koopman")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class RunManifest:
    """Collects every file written by one command, with the config hash and seed."""

    def __init__(self, command: str, cfg, out: Path):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.outputs = []
        self.t0 = time.perf_counter()
        self.extra = {}

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(name)
        return p

    def write(self) -> Path:
        data = {"command": self.command, "config_sha256": self.cfg.digest(), "seed": self.cfg.seed,
                "version": __version__, "reference_model": self.cfg.reference_model,
                "outputs": sorted(self.outputs), **self.extra}
        p = self.out / f"manifest_{self.command}.json"
        p.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        log.info("%s finished in %.1f s; manifest %s", self.command, time.perf_counter() - self.t0, p)
        return p


def _write_rows(path: Path, rows, fieldnames=None) -> None:
    rows = list(rows)
    fieldnames = fieldnames or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _write_matrix(path: Path, M) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.asarray(M):
            w.writerow([repr(float(x)) for x in row])


def _write_lifted(path: Path, times, X, lcfg) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + state_labels(lcfg))
        for t, row in zip(times, X):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in row])


def _tag(orders) -> str:
    return f"N{orders[0]}x{orders[1]}"


def _plot_errors(man: RunManifest, runs) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    titles = {"position": "position", "velocity": "velocity", "angles": "Euler angles (ZYX)"}
    for q in experiments.QUANTITIES:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for r in runs:
            e = getattr(r.errors, q)
            ax.semilogy(r.errors.times, e, label=f"N1={r.orders[0]}, N2={r.orders[1]}")
        ax.set_xlabel("t [s]")
        ax.set_ylabel("relative error")
        ax.set_title(titles[q])
        ax.legend()
        fig.tight_layout()
        fig.savefig(man.path(f"error_{q}.svg"), metadata={"Date": None})
        plt.close(fig)


# --- commands ----------------------------------------------------------------------------

def cmd_simulate(cfg, man: RunManifest, jobs: int) -> int:
    ref = experiments.reference_run(cfg)
    write_trajectory_csv(ref, man.path("reference.csv"))
    runs = experiments.run_orders(cfg, cfg.lift.orders(), ref, jobs)
    for r in runs:
        tag = _tag(r.orders)
        write_trajectory_csv(r.states, man.path(f"lifted_{tag}_states.csv"))
        _write_lifted(man.path(f"lifted_{tag}_X.csv"), r.X_times, r.X, r.lcfg)
        _write_matrix(man.path(f"model_{tag}_A.csv"), assemble_A(r.lcfg))
        _write_matrix(man.path(f"model_{tag}_Bsel.csv"), selector_B(r.lcfg))
        man.extra.setdefault("lift", {})[tag] = {
            "omega0": r.lcfg.omega0, "v0": r.lcfg.v0, "s0": r.lcfg.s0, "N": r.lcfg.N,
            "max_orthogonality_residual": r.max_orthogonality_residual}
        log.info("simulate %s: lifted run %.2f s", tag, r.runtime)
    return EXIT_OK


def cmd_sweep(cfg, man: RunManifest, jobs: int) -> int:
    ref = experiments.reference_run(cfg)
    runs = experiments.run_orders(cfg, cfg.lift.orders(), ref, jobs)
    for r in runs:
        r.errors.write_csv(man.path(f"errors_{_tag(r.orders)}.csv"))
    rows = experiments.summary_rows(runs, cfg.report_times)
    _write_rows(man.path("summary.csv"), rows)
    _plot_errors(man, runs)
    for row in rows:
        print("  ".join(f"{k}={v:.3e}" if isinstance(v, float) and k != "t" else f"{k}={v}"
                        for k, v in row.items()))
    return EXIT_OK


def cmd_compare_baseline(cfg, man: RunManifest, jobs: int) -> int:
    fit, training = experiments.fit_baseline(cfg)
    if fit is not None:
        fit.write_csv(man.path("baseline_fit.csv"))
        man.path("baseline_training_manifest.json").write_text(training.to_json() + "\n")
    ref = experiments.reference_run(cfg)
    table, _ = experiments.compare_baseline(cfg, ref, fit, jobs)
    rows = table.rows()
    _write_rows(man.path("table.csv"), rows, ["error"] + table.columns)
    for row in rows:
        print("  ".join(f"{k}={v}" for k, v in row.items()))
    missing = any(isinstance(v, str) for v in table.cells.values())
    return EXIT_FAIL if missing else EXIT_OK


def cmd_audit(cfg, man: RunManifest, jobs: int) -> int:
    items = experiments.run_audit(cfg)
    _write_rows(man.path("audit.csv"), (dataclasses.asdict(i) for i in items),
                ["name", "status", "value", "threshold", "detail"])
    ok = experiments.audit_passed(items)
    man.path("audit.json").write_text(json.dumps(
        {"passed": ok, "items": [dataclasses.asdict(i) for i in items]}, indent=2, default=float) + "\n")
    for i in items:
        print(f"[{i.status.upper():4s}] {i.name}: {i.value:.3e} (threshold {i.threshold:.3e}) {i.detail}")
    print("audit", "PASSED" if ok else "FAILED")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_controllability(cfg, man: RunManifest, jobs: int) -> int:
    from .lift import LiftConfig

    rows = []
    ok = True
    for o in cfg.audit.controllability_orders:
        rr = analysis.controllability_rank(LiftConfig(int(o[0]), int(o[1])))
        ok &= rr.full_rank
        rows.append({"N1": int(o[0]), "N2": int(o[1]), "N": rr.N, "rank": rr.rank,
                     "tolerance": rr.tolerance, "powers": rr.powers_used,
                     "sigma_min": float(rr.singular_values[min(rr.N, len(rr.singular_values)) - 1])})
        print(f"N1={o[0]} N2={o[1]}: rank {rr.rank} / {rr.N} (tol {rr.tolerance:.3e})")
    _write_rows(man.path("controllability.csv"), rows)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_recover_input(cfg, man: RunManifest, jobs: int) -> int:
    rows = []
    ok = True
    for o in experiments.recovery_study(cfg):
        r = o.run
        for t, rel in zip(r.times, r.relative_residuals):
            rows.append({"N1": o.orders[0], "N2": o.orders[1], "t": float(t), "relative_residual": float(rel),
                         "omega_envelope": r.omega_envelope, "v_envelope": r.v_envelope})
        ok &= o.optimality_failures == 0
        print(f"N1={o.orders[0]} N2={o.orders[1]}: mean relative residual "
              f"{r.mean_relative_residual:.4e}; |w| envelope {r.omega_envelope:.3e}, "
              f"|v| envelope {r.v_envelope:.3e}; perturbations beating the solution: "
              f"{o.optimality_failures}/{o.perturbations}")
    _write_rows(man.path("recovery.csv"), rows)
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "compare-baseline": cmd_compare_baseline,
    "audit": cmd_audit,
    "controllability": cmd_controllability,
    "recover-input": cmd_recover_input,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="se3koopman", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML experiment config (defaults if omitted)")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--out", help="output directory (overrides output_dir)")
        s.add_argument("--reference-model", choices=["full", "simplified"])
        s.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.reference_model is not None:
            cfg.reference_model = args.reference_model
        if args.out is not None:
            cfg.output_dir = args.out
        cfg.validate()
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest(args.command, cfg, out)
    dump_config(cfg, man.path(f"config_{args.command}.yaml"))
    code = COMMANDS[args.command](cfg, man, args.jobs)
    man.write()
    return code


if __name__ == "__main__":
    sys.exit(main())
