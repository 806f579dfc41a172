"""Diagnostics on the lifted model: input recovery, controllability, convergence audits, errors."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .dynamics import QuadrotorParams, QuadrotorState, Trajectory
from .linalg import euler_zyx_batch, hat, rotation_exp, wrap_angle
from .lift import (DomainBounds, LiftConfig, assemble_A, assemble_B, selector_B, unlift)

log = logging.getLogger(__name__)

ERROR_FLOOR = 1e-12
MAX_RANK_DIM = 1200
INV_SQRT2 = 1.0 / np.sqrt(2.0)


# --- input recovery ----------------------------------------------------------------------

@dataclass
class RecoveryResult:
    u_tilde: np.ndarray
    residual: float
    relative_residual: float
    rank: int

    def objective(self) -> float:
        return self.residual ** 2


def recover_input(x: QuadrotorState, U_star, cfg: LiftConfig, params: QuadrotorParams,
                  B=None) -> RecoveryResult:
    """Least-squares ``ut`` minimising ``|B(x) ut - Bsel U*|``.

    ``B`` may be passed in to avoid rebuilding it. A rank-deficient B is
    reported through ``rank`` (the pseudo-inverse still gives the minimum-norm
    minimiser).
    """
    if B is None:
        B = assemble_B(x, params, cfg)
    target = selector_B(cfg) @ np.asarray(U_star, dtype=float)
    u, _, rank, _ = np.linalg.lstsq(B, target, rcond=None)
    res = float(np.linalg.norm(B @ u - target))
    denom = float(np.linalg.norm(target))
    rel = res / denom if denom > ERROR_FLOOR else (0.0 if res <= ERROR_FLOOR else np.inf)
    if rank < B.shape[1]:
        log.warning("input matrix is rank deficient (rank %d of %d)", rank, B.shape[1])
    return RecoveryResult(u, res, rel, int(rank))


def recovery_objective(B, target, u) -> float:
    r = B @ u - target
    return float(r @ r)


@dataclass
class RecoveryRun:
    """Input recovery sampled along a lifted trajectory driven by a constant U*."""

    times: np.ndarray
    relative_residuals: np.ndarray
    u_tilde: np.ndarray
    U_star: np.ndarray
    omega_envelope: float
    v_envelope: float
    cfg: LiftConfig = field(repr=False, default=None)

    @property
    def mean_relative_residual(self) -> float:
        return float(np.mean(self.relative_residuals))


def recovery_experiment(x0: QuadrotorState, cfg: LiftConfig, params: QuadrotorParams,
                        t_final: float = 10.0, amplitude: float = 30.0, n_samples: int = 10,
                        seed: int = 0) -> RecoveryRun:
    """Drive ``X' = A X + Bsel U*`` with one random ``U* ~ U[-amp, amp]^N`` held for
    ``t_final`` seconds, then recover ``ut`` from the unlifted state at ``n_samples``
    evenly spaced times in ``(0, t_final]``.

    The propagation is exact (matrix exponential of the augmented system).
    """
    from .lift import lift

    rng = np.random.default_rng(seed)
    N = cfg.N
    U_star = rng.uniform(-amplitude, amplitude, size=N)
    M = np.zeros((N + 1, N + 1))
    M[:N, :N] = assemble_A(cfg)
    M[:N, N] = selector_B(cfg) @ U_star
    z0 = np.append(lift(x0, cfg), 1.0)
    times = t_final * np.arange(1, n_samples + 1) / n_samples
    rels, us = [], []
    w_env = v_env = 0.0
    for t in times:
        X = (expm(M * t) @ z0)[:N]
        x = unlift(X, cfg, strict=False)
        w_env = max(w_env, float(np.linalg.norm(x.omega)))
        v_env = max(v_env, float(np.linalg.norm(x.v)))
        r = recover_input(x, U_star, cfg, params)
        rels.append(r.relative_residual)
        us.append(r.u_tilde)
    return RecoveryRun(times, np.array(rels), np.array(us), U_star, w_env, v_env, cfg)


# --- controllability ---------------------------------------------------------------------

@dataclass
class RankReport:
    N: int
    rank: int
    singular_values: np.ndarray
    tolerance: float
    powers_used: int
    rank_by_power: list

    @property
    def full_rank(self) -> bool:
        return self.rank == self.N


def numeric_rank(M, n_ambient=None):
    """Rank with tolerance ``sigma_max * n * eps``; returns ``(rank, singular values, tol)``."""
    s = np.linalg.svd(M, compute_uv=False)
    n = n_ambient if n_ambient is not None else max(M.shape)
    tol = (s[0] if s.size else 0.0) * n * np.finfo(float).eps
    return int(np.sum(s > tol)), s, tol


def controllability_rank(cfg: LiftConfig, B=None, A=None) -> RankReport:
    """Numeric rank of ``[B, AB, A^2 B, ...]``, stopping once ``A^m B`` vanishes."""
    N = cfg.N
    if N > MAX_RANK_DIM:
        raise MemoryError(f"controllability check limited to N <= {MAX_RANK_DIM} (got {N})")
    A = assemble_A(cfg) if A is None else np.asarray(A, dtype=float)
    B = selector_B(cfg) if B is None else np.asarray(B, dtype=float)
    blocks = []
    ranks = []
    P = B.copy()
    for m in range(N):
        if m > 0 and not np.any(P):
            break
        blocks.append(P)
        ranks.append(numeric_rank(np.hstack(blocks), N)[0])
        P = A @ P
    C = np.hstack(blocks)
    rank, s, tol = numeric_rank(C, N)
    return RankReport(N, rank, s, tol, len(blocks), ranks)


# --- convergence audit -------------------------------------------------------------------

@dataclass
class AuditReport:
    n_samples: int
    n_excluded: int
    k_max: int
    violations: dict
    tail_f: float
    tail_g: float
    domain_violation: bool

    @property
    def passed(self) -> bool:
        return not any(self.violations.values())

    def rows(self):
        for name, count in sorted(self.violations.items()):
            yield {"check": name, "violations": count, "samples": self.n_samples - self.n_excluded,
                   "excluded": self.n_excluded, "k_max": self.k_max}


def _ball(rng, n, radius):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * (radius * rng.uniform(size=(n, 1)) ** (1.0 / 3.0))


def _batch_hat(w):
    H = np.zeros((len(w), 3, 3))
    H[:, 0, 1], H[:, 0, 2] = -w[:, 2], w[:, 1]
    H[:, 1, 0], H[:, 1, 2] = w[:, 2], -w[:, 0]
    H[:, 2, 0], H[:, 2, 1] = -w[:, 1], w[:, 0]
    return H


def sample_normalized_states(n: int, bounds: DomainBounds, rng):
    """Random ``(R, p, w_hat, v_hat)`` with the velocities uniform in balls of the given radii."""
    w = _ball(rng, n, bounds.omega_bar)
    v = _ball(rng, n, bounds.v_bar)
    R = np.array([rotation_exp(a) for a in rng.uniform(-np.pi, np.pi, size=(n, 3))])
    p = rng.uniform(-1.0, 1.0, size=(n, 3))
    return R, p, w, v


def convergence_audit(bounds: DomainBounds, samples: int = 10_000, k_max: int = 30,
                      input_bound: float = 1.0, seed: int = 0, tail_tol: float = 1e-3) -> AuditReport:
    """Checks the decay bounds of the normalised chains on random states.

    Per sample and ``k <= k_max``:
      f_bound      |f_k| <= |w|^k |v|
      g_bound      |vec(R W^k)| <= (sqrt2 |w|)^k
      f_monotone   |f_(k+1)| < |f_k|
      g_monotone   |vec(g_(k+1))| < |vec(g_k)|
      f_rate       |sum_i W^(i-1) hat(a) W^(k-i) v| <= k |w|^(k-1) |a| |v|
      g_rate       |vec(sum_i S^(i-1) S' S^(k-i))| <= k |S'|_F |S|_F^(k-1)
    with a random input direction ``|a| <= input_bound``. Samples with
    ``|w| >= 1/sqrt2`` lie outside the convergence domain; they are excluded and
    flagged as a domain violation rather than counted as failures.
    """
    rng = np.random.default_rng(seed)
    R, p, w, v = sample_normalized_states(samples, bounds, rng)
    a = _ball(rng, samples, input_bound)
    ud = rng.uniform(-input_bound, input_bound, size=samples)

    wn = np.linalg.norm(w, axis=1)
    vn = np.linalg.norm(v, axis=1)
    keep = (wn < INV_SQRT2) & (wn > 0) & (vn > 0)
    if np.any(wn >= INV_SQRT2):
        warnings.warn(f"{int(np.sum(wn >= INV_SQRT2))} samples have |w| >= 1/sqrt(2) "
                      "and were excluded from the audit", RuntimeWarning, stacklevel=2)
    R, p, w, v, a, ud, wn, vn = (z[keep] for z in (R, p, w, v, a, ud, wn, vn))
    n = len(w)
    rtol = 1e-12

    W = _batch_hat(w)
    h = np.zeros((n, 4, 4))
    h[:, :3, :3] = R
    h[:, :3, 3] = p
    h[:, 3, 3] = 1.0
    S = np.zeros((n, 4, 4))
    S[:, :3, :3] = W
    S[:, :3, 3] = v
    Sd = np.zeros((n, 4, 4))
    Sd[:, :3, :3] = _batch_hat(a)
    Sd[:, 2, 3] = ud
    an = np.linalg.norm(a, axis=1)
    Sn = np.linalg.norm(S, axis=(1, 2))
    Sdn = np.linalg.norm(Sd, axis=(1, 2))
    A_hat = _batch_hat(a)

    viol = {k: 0 for k in ("f_bound", "g_bound", "f_monotone", "g_monotone", "f_rate", "g_rate")}
    f = v.copy()
    Wk = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    Sk = np.broadcast_to(np.eye(4), (n, 4, 4)).copy()
    # running sums: Q_k = sum_i S^(i-1) S' S^(k-i), T_k = sum_i W^(i-1) hat(a) W^(k-i) v
    Q = np.zeros((n, 4, 4))
    T = np.zeros((n, 3))
    fprev = np.linalg.norm(f, axis=1)
    gprev = np.linalg.norm(h, axis=(1, 2))
    for k in range(1, k_max + 1):
        Q = Q @ S + Sk @ Sd
        T = np.einsum("nij,nj->ni", A_hat, f) + np.einsum("nij,nj->ni", W, T)
        f = np.einsum("nij,nj->ni", W, f)
        Wk = Wk @ W
        Sk = Sk @ S
        fn = np.linalg.norm(f, axis=1)
        gn = np.linalg.norm(h @ Sk, axis=(1, 2))
        viol["f_bound"] += int(np.sum(fn > wn ** k * vn * (1 + rtol)))
        viol["g_bound"] += int(np.sum(np.linalg.norm(R @ Wk, axis=(1, 2))
                                      > (np.sqrt(2) * wn) ** k * (1 + rtol)))
        viol["f_monotone"] += int(np.sum(~(fn < fprev)))
        viol["g_monotone"] += int(np.sum(~(gn < gprev)))
        viol["f_rate"] += int(np.sum(np.linalg.norm(T, axis=1)
                                     > k * wn ** (k - 1) * an * vn * (1 + rtol)))
        viol["g_rate"] += int(np.sum(np.linalg.norm(Q, axis=(1, 2))
                                     > k * Sdn * Sn ** (k - 1) * (1 + rtol)))
        fprev, gprev = fn, gn
    tail_f = float(fprev.max()) if n else 0.0
    tail_g = float(gprev.max()) if n else 0.0
    viol["tail"] = int(max(tail_f, tail_g) >= tail_tol)
    return AuditReport(samples, samples - n, k_max, viol, tail_f, tail_g,
                       domain_violation=bool(samples - n) or not bounds.valid)


def bound_audit(samples: int = 10_000, k_max: int = 30, omega_max: float = 2.0,
                v_max: float = 2.0, seed: int = 0) -> dict:
    """Violation counts of ``|W^k v| <= |w|^k |v|`` and ``|vec(R W^k)| <= (sqrt2 |w|)^k``
    over random raw states (no normalisation, no domain restriction)."""
    rng = np.random.default_rng(seed)
    w = _ball(rng, samples, omega_max)
    v = _ball(rng, samples, v_max)
    R = np.array([rotation_exp(a) for a in rng.uniform(-np.pi, np.pi, size=(samples, 3))])
    W = _batch_hat(w)
    wn = np.linalg.norm(w, axis=1)
    vn = np.linalg.norm(v, axis=1)
    rtol = 1e-12
    out = {"f_bound": 0, "g_bound": 0}
    f = v.copy()
    M = R.copy()
    for k in range(1, k_max + 1):
        f = np.einsum("nij,nj->ni", W, f)
        M = M @ W
        out["f_bound"] += int(np.sum(np.linalg.norm(f, axis=1) > wn ** k * vn * (1 + rtol)))
        out["g_bound"] += int(np.sum(np.linalg.norm(M, axis=(1, 2))
                                     > (np.sqrt(2) * wn) ** k * (1 + rtol)))
    return out


# --- literal coefficient-matrix audit ----------------------------------------------------

@dataclass
class TermDiscrepancy:
    chain: str
    k: int
    i: int
    max_abs_diff: float
    status: str          # "match", "mismatch" or "undefined"


def _mpow(M, e):
    return None if e < 0 else np.linalg.matrix_power(M, e)


def literal_term_audit(x: QuadrotorState, a, k_max: int, tol: float = 1e-10):
    """Compares each summand of the chain input terms with the printed closed forms.

    f-chain, per (k, i) with l = k - i:
        W^(i-1) hat(a) W^l v   vs   (-1)^(l+1) W^l hat(v) W^(i-1) a
    g-chain, per (k, i):
        h S^(i-1) S' S^(k-i)   vs   (-1)^l [[R W^(k-1) hat(a), -R W^(l-1) hat(v) W^(i-2) a], [0, 0]]
    where S' carries ``hat(a)`` only (no vertical-velocity term). Negative
    powers make a printed term undefined. Returns a list of
    :class:`TermDiscrepancy`, one per (chain, k, i).
    """
    a = np.asarray(a, dtype=float)
    W = hat(x.omega)
    v = x.v
    R = x.R
    h = x.h
    S = np.zeros((4, 4))
    S[:3, :3] = W
    S[:3, 3] = v
    Sd = np.zeros((4, 4))
    Sd[:3, :3] = hat(a)
    out = []
    for k in range(1, k_max + 1):
        for i in range(1, k + 1):
            l = k - i
            true_f = _mpow(W, i - 1) @ hat(a) @ _mpow(W, l) @ v
            lit_f = (-1) ** (l + 1) * _mpow(W, l) @ hat(v) @ _mpow(W, i - 1) @ a
            d = float(np.max(np.abs(true_f - lit_f)))
            out.append(TermDiscrepancy("f", k, i, d, "match" if d <= tol else "mismatch"))

            true_g = h @ _mpow(S, i - 1) @ Sd @ _mpow(S, l)
            P1, P2 = _mpow(W, l - 1), _mpow(W, i - 2)
            if P1 is None or P2 is None:
                out.append(TermDiscrepancy("g", k, i, np.nan, "undefined"))
                continue
            lit_g = np.zeros((4, 4))
            lit_g[:3, :3] = (-1) ** l * R @ _mpow(W, k - 1) @ hat(a)
            lit_g[:3, 3] = -(-1) ** l * R @ P1 @ hat(v) @ P2 @ a
            d = float(np.max(np.abs(true_g - lit_g)))
            out.append(TermDiscrepancy("g", k, i, d, "match" if d <= tol else "mismatch"))
    return out


# --- approximation error -----------------------------------------------------------------

@dataclass
class ErrorSeries:
    times: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    angles: np.ndarray

    def at(self, t: float) -> dict:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-6:
            raise ValueError(f"t={t} is not on the error grid")
        return {"position": float(self.position[i]), "velocity": float(self.velocity[i]),
                "angles": float(self.angles[i])}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "position", "velocity", "angles"])
            for row in zip(self.times, self.position, self.velocity, self.angles):
                w.writerow([repr(float(x)) for x in row])


def relative_error(a, b, floor: float = ERROR_FLOOR):
    """Row-wise ``|a - b| / |b|``; NaN where ``|b| <= floor``."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    num = np.linalg.norm(a - b, axis=1)
    den = np.linalg.norm(b, axis=1)
    out = np.full(len(den), np.nan)
    ok = den > floor
    out[ok] = num[ok] / den[ok]
    return out


def approximation_error(approx: Trajectory, reference: Trajectory,
                        floor: float = ERROR_FLOOR) -> ErrorSeries:
    """Relative state errors on a shared time grid, one series per tracked quantity.

    The angle difference is wrapped to ``[-pi, pi)`` before taking the norm.
    """
    if len(approx) != len(reference) or not np.allclose(approx.times, reference.times,
                                                        rtol=0, atol=1e-9):
        raise ValueError("trajectories must share the same time grid")
    ea = euler_zyx_batch(approx.R)
    eb = euler_zyx_batch(reference.R)
    diff = wrap_angle(ea - eb)
    den = np.linalg.norm(eb, axis=1)
    ang = np.full(len(den), np.nan)
    ok = den > floor
    ang[ok] = np.linalg.norm(diff, axis=1)[ok] / den[ok]
    return ErrorSeries(reference.times.copy(),
                       relative_error(approx.p, reference.p, floor),
                       relative_error(approx.v, reference.v, floor), ang)


# --- lift consistency along a trajectory -------------------------------------------------

@dataclass
class BlockResidual:
    name: str
    residual: float          # max over time of |finite difference - model|
    scale: float             # max over time of |finite difference|
    tail: bool
    bound: float = np.nan    # truncation envelope, tail blocks only
    allowance: float = 0.0   # finite-difference error estimate, tail blocks only

    @property
    def relative(self) -> float:
        return self.residual / max(self.scale, ERROR_FLOOR)

    @property
    def within_bound(self) -> bool:
        return self.residual <= self.bound + self.allowance


@dataclass
class ConsistencyReport:
    blocks: list
    dt: float

    def worst_non_tail(self) -> BlockResidual:
        return max((b for b in self.blocks if not b.tail), key=lambda b: b.relative)

    def tails(self) -> list:
        return [b for b in self.blocks if b.tail]


def lift_consistency(traj: Trajectory, cfg: LiftConfig, params: QuadrotorParams,
                     A=None) -> ConsistencyReport:
    """Finite-difference check of ``X' = A X + B(x) ut`` along a sampled trajectory.

    With ``X_k = lift(x_k)`` and the input held over each step, the forward
    quotient ``(X_(k+1) - X_k)/dt`` is compared with the trapezoidal average of
    the model right-hand side at both ends of the step; both are second-order
    accurate for the mean derivative over the step, so the mismatch is O(dt^2)
    wherever the model is exact. Per block the residual is the maximum mismatch
    over time and ``relative`` divides it by the largest derivative magnitude
    seen in that block.

    Tail blocks (``g_(N1-1)``, ``f_(N2-1)``) miss the truncated term; their
    ``bound`` is the envelope ``s0 |h|_F |S_hat|_F^N1`` (g) or
    ``omega0 |w_hat|^N2 |v_hat|`` (f) maximised over the trajectory, and their
    ``allowance`` is the residual of the preceding block, which estimates the
    finite-difference error at that depth.
    """
    from ._kernels import lifted_rhs_kernel
    from .lift import lift

    n = len(traj)
    dt = float(traj.times[1] - traj.times[0])
    N = cfg.N
    X = np.array([lift(traj.state(k), cfg) for k in range(n)])
    A = assemble_A(cfg) if A is None else np.asarray(A, dtype=float)
    J_chain = params.J if cfg.input_inertia == "literal" else params.J_inv
    BU0 = np.empty((n - 1, N))
    BU1 = np.empty((n - 1, N))
    buf = np.empty(N)
    for k in range(n - 1):
        u = np.ascontiguousarray(traj.inputs[k])
        lifted_rhs_kernel(X[k], u, cfg.N1, cfg.N2, 0.0, 0.0, cfg.s0, cfg.w_scale, cfg.v_scale,
                          params.J_inv, J_chain, buf)
        BU0[k] = buf
        lifted_rhs_kernel(X[k + 1], u, cfg.N1, cfg.N2, 0.0, 0.0, cfg.s0, cfg.w_scale,
                          cfg.v_scale, params.J_inv, J_chain, buf)
        BU1[k] = buf
    AX = X @ A.T
    model = 0.5 * (AX[:-1] + AX[1:] + BU0 + BU1)
    fd = np.diff(X, axis=0) / dt
    diff = fd - model

    wn = np.linalg.norm(traj.omega, axis=1) / cfg.s0
    vn = np.linalg.norm(traj.v, axis=1) / cfg.s0
    Sn = np.sqrt(2 * wn ** 2 + vn ** 2)
    hn = np.sqrt(4.0 + np.sum(traj.p ** 2, axis=1))
    g_env = float(np.max(cfg.s0 * hn * Sn ** cfg.N1))
    f_env = float(np.max(cfg.f_coeff * (np.linalg.norm(traj.omega, axis=1) / cfg.w_scale) ** cfg.N2
                         * np.linalg.norm(traj.v, axis=1) / cfg.v_scale))

    blocks = [BlockResidual("w", float(np.max(np.linalg.norm(diff[:, :3], axis=1))),
                            float(np.max(np.linalg.norm(fd[:, :3], axis=1))), False),
              BlockResidual("v3", float(np.max(np.abs(diff[:, 3]))),
                            float(np.max(np.abs(fd[:, 3]))), False)]
    for k in range(cfg.N1):
        s = cfg.g_slice(k)
        tail = k == cfg.N1 - 1
        blocks.append(BlockResidual(f"g{k}", float(np.max(np.linalg.norm(diff[:, s], axis=1))),
                                    float(np.max(np.linalg.norm(fd[:, s], axis=1))), tail,
                                    g_env if tail else np.nan))
    for k in range(cfg.N2):
        s = cfg.f_slice(k)
        tail = k == cfg.N2 - 1
        blocks.append(BlockResidual(f"f{k}", float(np.max(np.linalg.norm(diff[:, s], axis=1))),
                                    float(np.max(np.linalg.norm(fd[:, s], axis=1))), tail,
                                    f_env if tail else np.nan))
    for i, b in enumerate(blocks):
        if b.tail and i > 0 and blocks[i - 1].name[0] == b.name[0]:
            b.allowance = blocks[i - 1].residual
    return ConsistencyReport(blocks, dt)
