"""Experiment drivers shared by the CLI and the scripts: signals, sweeps, baseline table, audit."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analysis, baseline
from .config import ExperimentConfig, SignalConfig
from .dynamics import QuadrotorParams, QuadrotorState, Trajectory, integrate
from .lift import (LiftConfig, assemble_A, assemble_B, lift, propagate_lifted, selector_B,
                   unlift)
from .linalg import rotation_exp

log = logging.getLogger(__name__)

QUANTITIES = ("position", "velocity", "angles")
ROW_NAMES = {"position": "x", "velocity": "v", "angles": "[phi theta psi]"}

# independent random streams derived from the config seed
STREAM_SIGNAL, STREAM_BASELINE, STREAM_AUDIT, STREAM_RECOVERY = range(4)


def stream(seed: int, which: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(4)[which])


def stream_seed(seed: int, which: int) -> int:
    return int(stream(seed, which).integers(0, 2**63 - 1))


def make_signal(sig: SignalConfig, n: int, dt: float, seed: int) -> np.ndarray:
    """``(n, 4)`` transformed inputs ``amplitude * gamma * sin(carrier t)``.

    ``random``: gamma uniform in ``[gamma_low, gamma_high]``, independent per
    channel and redrawn every ``hold_steps`` steps. ``sine``: gamma fixed at
    ``gamma_high``. ``constant``: ``amplitude * gamma_high`` with no carrier.
    """
    t = np.arange(n) * dt
    if sig.kind == "constant":
        return np.full((n, 4), sig.amplitude * sig.gamma_high)
    carrier = np.sin(sig.carrier * t)[:, None]
    if sig.kind == "sine":
        return np.repeat(sig.amplitude * sig.gamma_high * carrier, 4, axis=1)
    rng = np.random.default_rng(seed)
    n_blocks = -(-n // sig.hold_steps)
    gamma = rng.uniform(sig.gamma_low, sig.gamma_high, size=(n_blocks, 4))
    gamma = np.repeat(gamma, sig.hold_steps, axis=0)[:n]
    return sig.amplitude * gamma * carrier


def initial_state(cfg: ExperimentConfig) -> QuadrotorState:
    ic = cfg.initial
    return QuadrotorState(rotation_exp(ic.attitude), np.asarray(ic.p, float),
                          np.asarray(ic.omega, float), np.asarray(ic.v, float))


def n_steps(cfg: ExperimentConfig) -> int:
    return int(round(cfg.t_final / cfg.dt))


def test_signal(cfg: ExperimentConfig) -> np.ndarray:
    return make_signal(cfg.signal, n_steps(cfg), cfg.dt, stream_seed(cfg.seed, STREAM_SIGNAL))


def reference_run(cfg: ExperimentConfig, inputs=None) -> Trajectory:
    inputs = test_signal(cfg) if inputs is None else inputs
    return integrate(initial_state(cfg), inputs, cfg.params.build(), cfg.t_final, cfg.dt,
                     cfg.reference_model)


def envelope(traj: Trajectory):
    return (float(np.max(np.linalg.norm(traj.omega, axis=1))),
            float(np.max(np.linalg.norm(traj.v, axis=1))))


def lift_config(cfg: ExperimentConfig, N1: int, N2: int, ref: Trajectory) -> LiftConfig:
    return cfg.lift.build(N1, N2, *envelope(ref))


@dataclass
class LiftedRun:
    orders: tuple
    lcfg: LiftConfig
    X: np.ndarray
    X_times: np.ndarray
    states: Trajectory
    errors: analysis.ErrorSeries
    runtime: float
    max_orthogonality_residual: float


def lifted_run(cfg: ExperimentConfig, N1: int, N2: int, ref: Trajectory) -> LiftedRun:
    lcfg = lift_config(cfg, N1, N2, ref)
    params = cfg.params.build()
    t0 = time.perf_counter()
    lt = propagate_lifted(lift(ref.state(0), lcfg), ref.inputs[:-1], lcfg, params, cfg.t_final,
                          cfg.dt, record_stride=cfg.record_stride)
    runtime = time.perf_counter() - t0
    err = analysis.approximation_error(lt.states, ref)
    log.info("lifted run N1=%d N2=%d: %.2f s", N1, N2, runtime)
    return LiftedRun((N1, N2), lcfg, lt.X, lt.times, lt.states, err, runtime,
                     lt.max_orthogonality_residual)


def _lifted_worker(args):
    cfg, N1, N2, ref = args
    return lifted_run(cfg, N1, N2, ref)


def run_orders(cfg: ExperimentConfig, orders, ref: Trajectory, jobs: int = 1) -> list:
    """One lifted run per ``(N1, N2)``, in the order given, optionally in worker processes."""
    tasks = [(cfg, N1, N2, ref) for N1, N2 in orders]
    if jobs <= 1 or len(tasks) <= 1:
        return [_lifted_worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_lifted_worker, tasks))


def summary_rows(runs, times) -> list:
    """One row per (time, quantity) with one column per run."""
    rows = []
    for t in times:
        for q in QUANTITIES:
            row = {"t": float(t), "quantity": q}
            for r in runs:
                row[f"N1={r.orders[0]},N2={r.orders[1]}"] = r.errors.at(t)[q]
            rows.append(row)
    return rows


# --- baseline ------------------------------------------------------------------------------

def _training_signal(sig: SignalConfig):
    def fn(n, dt, seed):
        return make_signal(sig, n, dt, seed)
    return fn


def fit_baseline(cfg: ExperimentConfig):
    """Returns ``(FitResult, TrainingManifest)`` or ``(None, None)`` when disabled."""
    b = cfg.baseline
    if b.n_trajectories == 0:
        return None, None
    params = cfg.params.build()
    Z, Zp, U, man = baseline.training_data(
        params, _training_signal(cfg.signal), b.n_trajectories, b.horizon, cfg.dt,
        cfg.reference_model, stream_seed(cfg.seed, STREAM_BASELINE), b.omega_range, b.v_range,
        b.gravity_frame)
    fit = baseline.fit_edmdc(Z, Zp, U, cfg.dt, b.gravity_frame, params.g)
    if fit.rank_deficient:
        log.warning("baseline regressor is rank deficient (rank %d, cond %.3e)", fit.rank, fit.cond)
    return fit, man


@dataclass
class ComparisonTable:
    t: float
    columns: list
    cells: dict = field(default_factory=dict)     # (row, column) -> float or str

    def value(self, quantity: str, column: str):
        return self.cells[(quantity, column)]

    def rows(self) -> list:
        out = []
        for q in QUANTITIES:
            row = {"error": ROW_NAMES[q]}
            for c in self.columns:
                v = self.cells[(q, c)]
                row[c] = v if isinstance(v, str) else f"{v:.3e}"
            out.append(row)
        return out


def compare_baseline(cfg: ExperimentConfig, ref: Trajectory = None, fit=None, jobs: int = 1,
                     t: float = None):
    """Table of terminal errors for the configured lifted orders and the EDMDc baseline.

    Returns ``(table, runs, fit)``; a missing or diverged baseline shows as a
    text cell (``not fitted`` / ``diverged``).
    """
    ref = reference_run(cfg) if ref is None else ref
    t = cfg.t_final if t is None else t
    orders = LiftOrders.parse(cfg.baseline.compare_orders)
    runs = run_orders(cfg, orders, ref, jobs)
    cols = [f"N1={a},N2={b}" for a, b in orders] + ["baseline"]
    table = ComparisonTable(t, cols)
    for r, c in zip(runs, cols):
        e = r.errors.at(t)
        for q in QUANTITIES:
            table.cells[(q, c)] = e[q]
    if fit is None:
        for q in QUANTITIES:
            table.cells[(q, "baseline")] = "not fitted"
    else:
        try:
            pred = baseline.predict_baseline(fit, ref.state(0), ref.inputs[:-1], cfg.dt)
            e = analysis.approximation_error(pred, ref).at(t)
            for q in QUANTITIES:
                table.cells[(q, "baseline")] = e[q]
        except FloatingPointError:
            for q in QUANTITIES:
                table.cells[(q, "baseline")] = "diverged"
    return table, runs


class LiftOrders:
    @staticmethod
    def parse(entries) -> list:
        out = []
        for g in entries:
            out.append((g, g) if isinstance(g, int) else (int(g[0]), int(g[1])))
        return out


# --- input recovery ------------------------------------------------------------------------

@dataclass
class RecoveryOutcome:
    orders: tuple
    run: analysis.RecoveryRun
    optimality_failures: int
    perturbations: int


def recovery_study(cfg: ExperimentConfig) -> list:
    """Input recovery at each configured order, plus a perturbation check of optimality."""
    params = cfg.params.build()
    x0 = initial_state(cfg)
    ref_env = (np.linalg.norm(x0.omega), np.linalg.norm(x0.v))
    out = []
    rc = cfg.recovery
    for N1, N2 in LiftOrders.parse(rc.orders):
        lcfg = cfg.lift.build(N1, N2, *ref_env)
        seed = stream_seed(cfg.seed, STREAM_RECOVERY)
        run = analysis.recovery_experiment(x0, lcfg, params, rc.t_final, rc.amplitude,
                                           rc.n_samples, seed)
        X = lift(x0, lcfg)
        x = unlift(X, lcfg)
        B = assemble_B(x, params, lcfg)
        target = selector_B(lcfg) @ run.U_star
        best = analysis.recover_input(x, run.U_star, lcfg, params, B)
        base = analysis.recovery_objective(B, target, best.u_tilde)
        rng = np.random.default_rng(seed)
        fails = 0
        for _ in range(rc.perturbations):
            du = rng.normal(size=4) * (np.abs(best.u_tilde).max() + 1e-3) * 0.1
            if analysis.recovery_objective(B, target, best.u_tilde + du) < base:
                fails += 1
        out.append(RecoveryOutcome((N1, N2), run, fails, rc.perturbations))
    return out


# --- audit ---------------------------------------------------------------------------------

@dataclass
class AuditItem:
    name: str
    status: str            # "pass", "fail" or "info"
    value: float
    threshold: float
    detail: str = ""


def _random_state(rng, w_scale=0.4, v_scale=0.5) -> QuadrotorState:
    return QuadrotorState(rotation_exp(rng.uniform(-np.pi, np.pi, 3)), rng.uniform(-2, 2, 3),
                          rng.uniform(-w_scale, w_scale, 3), rng.uniform(-v_scale, v_scale, 3))


def b_equivalence(lcfg: LiftConfig, params: QuadrotorParams, samples: int, rng):
    """Max |columnwise - closed form| over random states, for f-blocks and g-blocks."""
    f_rows = np.arange(lcfg.f_start, lcfg.N)
    g_rows = np.arange(4, lcfg.f_start)
    fmax = gmax = 0.0
    for _ in range(samples):
        x = _random_state(rng)
        d = np.abs(assemble_B(x, params, lcfg, "columnwise") - assemble_B(x, params, lcfg, "closed_form"))
        fmax = max(fmax, float(d[f_rows].max()))
        gmax = max(gmax, float(d[g_rows].max()))
    return fmax, gmax


def consistency_run(cfg: ExperimentConfig, model: str, N1: int, N2: int, A_fn=None):
    """Lift-consistency report along a short run of ``model``.

    ``A_fn(lift_config) -> A`` replaces the assembled A (used for mutation checks).
    """
    params = cfg.params.build()
    horizon = cfg.audit.consistency_horizon
    n = int(round(horizon / cfg.dt))
    u = make_signal(cfg.signal, n, cfg.dt, stream_seed(cfg.seed, STREAM_AUDIT))
    traj = integrate(initial_state(cfg), u, params, horizon, cfg.dt, model)
    lcfg = lift_config(cfg, N1, N2, traj)
    A = None if A_fn is None else A_fn(lcfg)
    return analysis.lift_consistency(traj, lcfg, params, A), traj


def run_audit(cfg: ExperimentConfig, A_override=None) -> list:
    """Every invariant check as a list of :class:`AuditItem`.

    ``A_override`` (a callable ``LiftConfig -> A``) replaces the assembled A in
    the consistency checks; used to confirm that a tampered model is caught.
    """
    ac = cfg.audit
    params = cfg.params.build()
    rng = stream(cfg.seed, STREAM_AUDIT)
    items = []

    rep = analysis.convergence_audit(ac.bounds(), ac.samples, ac.k_max, ac.input_bound,
                                     int(rng.integers(0, 2**63 - 1)))
    for row in rep.rows():
        items.append(AuditItem(f"chain_{row['check']}", "pass" if row["violations"] == 0 else "fail",
                               row["violations"], 0, f"{row['samples']} samples, k<={ac.k_max}"))
    items.append(AuditItem("domain", "info", rep.n_excluded, 0,
                           "domain violation: samples with |w| >= 1/sqrt2 excluded"
                           if rep.domain_violation else "all samples inside the convergence domain"))

    N1, N2 = ac.consistency_orders
    lcfg = LiftConfig.for_envelope(N1, N2, 0.4 * 3 ** 0.5, 0.5 * 3 ** 0.5)
    fmax, gmax = b_equivalence(lcfg, params, ac.equivalence_samples, rng)
    items.append(AuditItem("B_equivalence_f", "pass" if fmax <= 1e-10 else "fail", fmax, 1e-10))
    items.append(AuditItem("B_equivalence_g", "pass" if gmax <= 1e-10 else "fail", gmax, 1e-10))

    x = _random_state(rng)
    a = params.J_inv @ rng.uniform(-1, 1, 3)
    terms = analysis.literal_term_audit(x, a, min(N1, 6))
    bad = [d for d in terms if d.status != "match"]
    items.append(AuditItem("printed_term_forms", "info", len(bad), 0,
                           "; ".join(f"{d.chain}(k={d.k},i={d.i}):{d.status}" for d in bad)))

    for o in ac.controllability_orders:
        c = LiftConfig(int(o[0]), int(o[1]))
        rr = analysis.controllability_rank(c)
        items.append(AuditItem(f"controllability_{o[0]}_{o[1]}", "pass" if rr.full_rank else "fail",
                               rr.rank, rr.N, f"tol={rr.tolerance:.3e}, powers={rr.powers_used}"))

    A = assemble_A(lcfg)
    P = np.linalg.matrix_power(A, max(N1, N2))
    items.append(AuditItem("A_nilpotent", "pass" if not np.any(P) else "fail",
                           float(np.abs(P).max()), 0))

    worst = 0.0
    for _ in range(100):
        xs = _random_state(rng)
        xr = unlift(lift(xs, lcfg), lcfg)
        worst = max(worst, float(max(np.abs(xr.R - xs.R).max(), np.abs(xr.p - xs.p).max(),
                                     np.abs(xr.omega - xs.omega).max(), np.abs(xr.v - xs.v).max())))
    items.append(AuditItem("lift_roundtrip", "pass" if worst <= 1e-12 else "fail", worst, 1e-12))

    B = assemble_B(_random_state(rng), params, lcfg)
    mp = float(np.abs(B @ np.linalg.pinv(B) @ B - B).max())
    items.append(AuditItem("pseudo_inverse", "pass" if mp <= 1e-8 else "fail", mp, 1e-8))

    for model, prefix in (("kinematic", "g"), ("coriolis", "f")):
        rep_c, traj = consistency_run(cfg, model, N1, N2, A_override)
        chain = [b for b in rep_c.blocks if b.name.startswith(prefix) and not b.tail]
        chain += [b for b in rep_c.blocks if b.name == "w"]
        wb = max(chain, key=lambda b: b.relative)
        items.append(AuditItem(f"lift_consistency_{prefix}_chain",
                               "pass" if wb.relative <= ac.consistency_tol else "fail",
                               wb.relative, ac.consistency_tol, f"{model} model, worst block {wb.name}"))
        tail = [b for b in rep_c.tails() if b.name.startswith(prefix)][0]
        items.append(AuditItem(f"truncation_tail_{prefix}",
                               "pass" if tail.within_bound else "fail",
                               tail.residual, tail.bound + tail.allowance, f"block {tail.name}"))
        orth = max(float(np.linalg.norm(R.T @ R - np.eye(3))) for R in traj.R[::100])
        items.append(AuditItem(f"integrator_orthogonality_{model}",
                               "pass" if orth <= 1e-9 else "fail", orth, 1e-9))

    # the reference model itself is measured, not held to an invariant
    rep_r, _ = consistency_run(cfg, cfg.reference_model, N1, N2)
    w = rep_r.worst_non_tail()
    items.append(AuditItem("lift_consistency_reference", "info", w.relative, 1e-4,
                           f"{cfg.reference_model} model, worst block {w.name}"))
    return items


def audit_passed(items) -> bool:
    return all(i.status != "fail" for i in items)
