"""Analytic Koopman lift of the quadrotor: observables, lifted linear model, propagation.

Lifted state layout (length ``N = 16*N1 + 3*N2 + 4``)::

    [ omega (3) | v_3 (1) | vec(g_0) ... vec(g_{N1-1}) (16 each) | f_0 ... f_{N2-1} (3 each) ]

with ``g_k = h (S/s0)^k`` and ``f_k = (hat(omega)/omega0)^k v / v0``. The raw
variant uses ``omega0 = v0 = s0 = 1``. ``vec`` is column-major throughout.

Lifted dynamics: ``X' = A X + B(x) ut`` where A is a pair of nilpotent shift
chains (g_k' <- s0 g_{k+1}, f_k' <- -omega0 f_{k+1}) and B(x) carries the
input terms of each observable's time derivative.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dynamics import InputSignal, QuadrotorParams, QuadrotorState, Trajectory, _input_at
from .linalg import hat, matrix_power, nearest_rotation, orthogonality_residual, twist, vec

log = logging.getLogger(__name__)

G_BLOCK = 16
F_BLOCK = 3
HEAD = 4

B_MODES = ("columnwise", "closed_form")
INERTIA_MODES = ("inverse", "literal")


@dataclass(frozen=True)
class LiftConfig:
    """Truncation orders and normalisation of the lift.

    ``literal_scaling`` swaps the chain coefficients of A (g-chain scaled
    by omega0, f-chain by s0). ``input_inertia='literal'`` feeds ``J @ ut[:3]``
    instead of ``J^-1 @ ut[:3]`` into the chain input terms.
    """

    N1: int = 15
    N2: int = 15
    normalized: bool = True
    omega0: float = 1.0
    v0: float = 1.0
    b_construction: str = "columnwise"
    literal_scaling: bool = False
    input_inertia: str = "inverse"

    def __post_init__(self):
        if self.N1 < 1 or self.N2 < 1:
            raise ValueError("N1 and N2 must be >= 1")
        if self.omega0 <= 0 or self.v0 <= 0:
            raise ValueError("normalisation constants must be positive")
        if self.b_construction not in B_MODES:
            raise ValueError(f"b_construction must be one of {B_MODES}")
        if self.input_inertia not in INERTIA_MODES:
            raise ValueError(f"input_inertia must be one of {INERTIA_MODES}")

    @property
    def N(self) -> int:
        return G_BLOCK * self.N1 + F_BLOCK * self.N2 + HEAD

    @property
    def s0(self) -> float:
        return max(self.omega0, self.v0) if self.normalized else 1.0

    @property
    def w_scale(self) -> float:
        return self.omega0 if self.normalized else 1.0

    @property
    def v_scale(self) -> float:
        return self.v0 if self.normalized else 1.0

    @property
    def g_coeff(self) -> float:
        if not self.normalized:
            return 1.0
        return self.omega0 if self.literal_scaling else self.s0

    @property
    def f_coeff(self) -> float:
        if not self.normalized:
            return 1.0
        return self.s0 if self.literal_scaling else self.omega0

    def g_slice(self, k: int) -> slice:
        if not 0 <= k < self.N1:
            raise IndexError(k)
        start = HEAD + G_BLOCK * k
        return slice(start, start + G_BLOCK)

    def f_slice(self, k: int) -> slice:
        if not 0 <= k < self.N2:
            raise IndexError(k)
        start = HEAD + G_BLOCK * self.N1 + F_BLOCK * k
        return slice(start, start + F_BLOCK)

    @property
    def f_start(self) -> int:
        return HEAD + G_BLOCK * self.N1

    @classmethod
    def for_envelope(cls, N1: int, N2: int, max_omega: float, max_v: float,
                     margin: float = 1.25, **kw) -> "LiftConfig":
        """Normalised config with ``omega0 = sqrt(2)*margin*max|omega|`` and ``v0 = margin*max|v|``."""
        omega0 = np.sqrt(2.0) * margin * max(max_omega, 1e-9)
        v0 = margin * max(max_v, 1e-9)
        return cls(N1=N1, N2=N2, normalized=True, omega0=float(omega0), v0=float(v0), **kw)


@dataclass(frozen=True)
class DomainBounds:
    """Bounds on normalised speeds under which the observable chains decay."""

    omega_bar: float = 0.6 / np.sqrt(2.0)
    v_bar: float = 0.9

    @property
    def valid(self) -> bool:
        return self.omega_bar < 1.0 / np.sqrt(2.0) and self.v_bar < 1.0


def state_labels(cfg: LiftConfig) -> list[str]:
    """Column names for a lifted state: ``w1..w3, v3, gK_rc..., fK_i``."""
    labels = ["w1", "w2", "w3", "v3"]
    for k in range(cfg.N1):
        labels += [f"g{k}_{r}{c}" for c in range(4) for r in range(4)]
    for k in range(cfg.N2):
        labels += [f"f{k}_{i + 1}" for i in range(3)]
    return labels


# --- observables -------------------------------------------------------------------------

def observable_g(x: QuadrotorState, k: int, cfg: LiftConfig) -> np.ndarray:
    if k < 0:
        raise ValueError("k must be >= 0")
    S = twist(x.omega, x.v) / cfg.s0
    return x.h @ matrix_power(S, k)


def observable_f(omega, v, k: int, cfg: LiftConfig) -> np.ndarray:
    if k < 0:
        raise ValueError("k must be >= 0")
    W = hat(omega) / cfg.w_scale
    f = np.asarray(v, dtype=float) / cfg.v_scale
    for _ in range(k):
        f = W @ f
    return f


def lift(x: QuadrotorState, cfg: LiftConfig) -> np.ndarray:
    X = np.zeros(cfg.N)
    X[:3] = x.omega
    X[3] = x.v[2]
    S = twist(x.omega, x.v) / cfg.s0
    g = x.h
    for k in range(cfg.N1):
        X[cfg.g_slice(k)] = vec(g)
        g = g @ S
    W = hat(x.omega) / cfg.w_scale
    f = x.v / cfg.v_scale
    for k in range(cfg.N2):
        X[cfg.f_slice(k)] = f
        f = W @ f
    return X


class UnliftError(ValueError):
    pass


def unlift(X, cfg: LiftConfig, tol: float = 1e-6, strict: bool = True,
           return_residual: bool = False):
    """Read a physical state back from a lifted vector.

    ``omega`` and ``v_3`` come from the head, ``R`` and ``p`` from the g_0
    block (R projected onto SO(3)), and the lateral velocity from f_0. With
    ``strict`` a g_0 block further than ``tol`` from a pose raises.
    """
    X = np.asarray(X, dtype=float)
    if X.shape != (cfg.N,):
        raise UnliftError(f"expected lifted vector of length {cfg.N}, got {X.shape}")
    G0 = X[cfg.g_slice(0)].reshape(4, 4, order="F")
    M = G0[:3, :3]
    scale = np.linalg.norm(M)
    if not np.isfinite(scale) or scale < 1e-12:
        raise UnliftError("g_0 block is degenerate (zero or non-finite)")
    residual = orthogonality_residual(M)
    row = float(np.max(np.abs(G0[3] - [0.0, 0.0, 0.0, 1.0])))
    if strict and (residual > tol or row > tol):
        raise UnliftError(f"g_0 is not a pose: |R^T R - I|_F = {residual:.3e}, last-row error {row:.3e}")
    R = M if residual == 0.0 else nearest_rotation(M)
    f0 = X[cfg.f_slice(0)] * cfg.v_scale
    state = QuadrotorState(R, G0[:3, 3].copy(), X[:3].copy(), np.array([f0[0], f0[1], X[3]]))
    if return_residual:
        return state, residual
    return state


# --- constant matrices -------------------------------------------------------------------

def assemble_A(cfg: LiftConfig) -> np.ndarray:
    """Block-diagonal A: zero head, g-shift chain, negated f-shift chain."""
    A = np.zeros((cfg.N, cfg.N))
    I16, I3 = np.eye(G_BLOCK), np.eye(F_BLOCK)
    for k in range(cfg.N1 - 1):
        A[cfg.g_slice(k), cfg.g_slice(k + 1)] = cfg.g_coeff * I16
    for k in range(cfg.N2 - 1):
        A[cfg.f_slice(k), cfg.f_slice(k + 1)] = -cfg.f_coeff * I3
    return A


def apply_A(X, cfg: LiftConfig) -> np.ndarray:
    """``assemble_A(cfg) @ X`` without forming A."""
    out = np.zeros_like(X)
    g0, f0 = HEAD, cfg.f_start
    g_end = f0 - G_BLOCK
    out[g0:g_end] = cfg.g_coeff * X[g0 + G_BLOCK:f0]
    out[f0:cfg.N - F_BLOCK] = -cfg.f_coeff * X[f0 + F_BLOCK:]
    return out


def selector_mask(cfg: LiftConfig) -> np.ndarray:
    """Diagonal of the selector: ones on head, g_1.., f_1..; zeros on g_0 and f_0."""
    d = np.ones(cfg.N)
    d[cfg.g_slice(0)] = 0.0
    d[cfg.f_slice(0)] = 0.0
    return d


def selector_B(cfg: LiftConfig) -> np.ndarray:
    return np.diag(selector_mask(cfg))


# --- state-dependent input matrix --------------------------------------------------------

def _omega_rate(ut3, params: QuadrotorParams, cfg: LiftConfig):
    if cfg.input_inertia == "literal":
        return params.J @ ut3
    return params.J_inv @ ut3


def input_response(x: QuadrotorState, ut, params: QuadrotorParams, cfg: LiftConfig) -> np.ndarray:
    """``B(x) @ ut`` evaluated directly from the block expressions.

    g_k (k >= 1):  vec(h sum_i S^(i-1) S' S^(k-i)), S' = [hat(omega'), (0, 0, ut_4)]
    f_k (k >= 1):  sum_i W^(i-1) hat(omega') W^(k-i) v
    with everything in normalised units. ``ut`` may be a ``(4,)`` vector or a
    ``(4, c)`` matrix of inputs (one per column).
    """
    ut = np.asarray(ut, dtype=float)
    single = ut.ndim == 1
    U = ut[:, None] if single else ut
    c = U.shape[1]
    out = np.zeros((cfg.N, c))
    out[:3] = params.J_inv @ U[:3]
    out[3] = U[3]

    a = _omega_rate(U[:3], params, cfg)                       # (3, c)
    s0 = cfg.s0
    S = twist(x.omega, x.v) / s0
    Sd = np.zeros((c, 4, 4))
    Sd[:, 0, 1], Sd[:, 0, 2] = -a[2], a[1]
    Sd[:, 1, 0], Sd[:, 1, 2] = a[2], -a[0]
    Sd[:, 2, 0], Sd[:, 2, 1] = -a[1], a[0]
    Sd[:, 2, 3] = U[3]
    Sd /= s0
    h = x.h
    Q = np.zeros((c, 4, 4))
    Sp = np.eye(4)                                            # S^(k-1)
    for k in range(1, cfg.N1):
        Q = Q @ S + Sp @ Sd
        Sp = Sp @ S
        out[cfg.g_slice(k)] = (h @ Q).transpose(2, 1, 0).reshape(G_BLOCK, c)

    wsc = cfg.w_scale
    W = hat(x.omega) / wsc
    an = a / wsc
    f = x.v / cfg.v_scale                                     # f_(k-1)
    T = np.zeros((3, c))
    for k in range(1, cfg.N2):
        # T_k = hat(a) f_(k-1) + W T_(k-1)
        T = np.cross(an.T, f).T + W @ T
        f = W @ f
        out[cfg.f_slice(k)] = T
    return out[:, 0] if single else out


def _vec_hat_matrix() -> np.ndarray:
    """9x3 constant C with ``vec(hat(a)) = C @ a``."""
    C = np.zeros((9, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1.0
        C[:, j] = vec(hat(e))
    return C


VEC_HAT = _vec_hat_matrix()
C3 = np.hstack([VEC_HAT, np.zeros((9, 1))])


def _closed_form_B(x: QuadrotorState, params: QuadrotorParams, cfg: LiftConfig) -> np.ndarray:
    """B(x) from explicit coefficient matrices acting on ut.

    Per (k, i) with p = i-1, q = k-i and W, v, a in g-chain units:
      upper-left   vec(R W^p hat(a) W^q) = kron(W^q.T, R W^p) C3 ut
      upper-right  R W^p hat(a) W^(q-1) v = -R W^p hat(W^(q-1) v) Ja ut[:3]   (q >= 1)
                   R W^p e3 ut_4                                              (q == 0)
    f-chain:       W^(i-1) hat(a) W^(k-i) v = -W^(i-1) hat(f_(k-i)) Ja ut[:3]
    where ``Ja`` is J^-1 (or J) scaled by the chain constant.
    """
    N = cfg.N
    B = np.zeros((N, 4))
    B[:3, :3] = params.J_inv
    B[3, 3] = 1.0
    Jin = params.J if cfg.input_inertia == "literal" else params.J_inv
    Jblk = np.zeros((4, 4))
    Jblk[:3, :3] = Jin
    Jblk[3, 3] = 1.0

    R = x.R
    s0 = cfg.s0
    W = hat(x.omega) / s0
    vs = x.v / s0
    Wp = [np.eye(3)]
    for _ in range(max(cfg.N1, cfg.N2)):
        Wp.append(Wp[-1] @ W)
    e3 = np.array([0.0, 0.0, 1.0])
    for k in range(1, cfg.N1):
        Bk = np.zeros((4, 4, 4))                               # rows, cols of g, input index
        UL = np.zeros((9, 4))
        UR = np.zeros((3, 4))
        for i in range(1, k + 1):
            p, q = i - 1, k - i
            C1 = np.kron(Wp[q].T, R @ Wp[p])
            UL += C1 @ C3 @ Jblk / s0
            if q >= 1:
                C2 = -R @ Wp[p] @ hat(Wp[q - 1] @ vs)
                UR[:, :3] += C2 @ Jin / s0
            else:
                UR[:, 3] += R @ Wp[p] @ e3 / s0
        Bk[:3, :3, :] = UL.reshape(3, 3, 4, order="F")
        Bk[:3, 3, :] = UR
        B[cfg.g_slice(k)] = Bk.transpose(1, 0, 2).reshape(G_BLOCK, 4)

    wsc = cfg.w_scale
    Wf = hat(x.omega) / wsc
    fs = [x.v / cfg.v_scale]
    for _ in range(cfg.N2):
        fs.append(Wf @ fs[-1])
    Wfp = [np.eye(3)]
    for _ in range(cfg.N2):
        Wfp.append(Wfp[-1] @ Wf)
    for k in range(1, cfg.N2):
        C = np.zeros((3, 3))
        for i in range(1, k + 1):
            C -= Wfp[i - 1] @ hat(fs[k - i])
        B[cfg.f_slice(k), :3] = C @ Jin / wsc
    return B


def assemble_B(x: QuadrotorState, params: QuadrotorParams, cfg: LiftConfig,
               mode: Optional[str] = None) -> np.ndarray:
    """State-dependent N x 4 input matrix, built column by column or in closed form."""
    mode = mode or cfg.b_construction
    if mode == "columnwise":
        return input_response(x, np.eye(4), params, cfg)
    if mode == "closed_form":
        return _closed_form_B(x, params, cfg)
    raise ValueError(f"unknown B construction {mode!r}")


def lifted_rhs(X, ut, cfg: LiftConfig, params: QuadrotorParams,
               x_for_B: Optional[QuadrotorState] = None) -> np.ndarray:
    """``A X + B(x) ut``; ``x`` defaults to ``unlift(X)`` (projected, non-strict)."""
    X = np.asarray(X, dtype=float)
    if x_for_B is None:
        x_for_B = unlift(X, cfg, strict=False)
    return apply_A(X, cfg) + input_response(x_for_B, ut, params, cfg)


# --- propagation -------------------------------------------------------------------------

@dataclass
class LiftedTrajectory:
    """Lifted states recorded every ``stride`` steps plus the unlifted state at every step."""

    times: np.ndarray
    X: np.ndarray
    states: Trajectory
    max_orthogonality_residual: float
    cfg: LiftConfig = field(repr=False, default=None)


def sample_signal(signal: InputSignal, n: int, dt: float) -> np.ndarray:
    """``(n, 4)`` array of held inputs from an array or a callable ``t -> ut``."""
    if callable(signal):
        return np.array([_input_at(signal, k, k * dt) for k in range(n)], dtype=float).reshape(n, 4)
    arr = np.asarray(signal, dtype=float)
    if arr.shape[0] < n:
        raise ValueError(f"input signal has {arr.shape[0]} samples, need {n}")
    return np.ascontiguousarray(arr[:n])


def _batch_nearest_rotation(Ms: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(Ms)
    d = np.sign(np.linalg.det(U @ Vt))
    d[d == 0] = 1.0
    U[:, :, 2] *= d[:, None]
    return U @ Vt


def propagate_lifted(X0, signal: InputSignal, cfg: LiftConfig, params: QuadrotorParams,
                     t_final: float, dt: float = 1e-3, record_stride: int = 1) -> LiftedTrajectory:
    """RK4 on the lifted linear model, rebuilding B(x) from ``unlift(X)`` at every stage."""
    from ._kernels import rk4_lifted

    if dt <= 0:
        raise ValueError("dt must be positive")
    if record_stride < 1:
        raise ValueError("record_stride must be >= 1")
    n = int(round(t_final / dt))
    X0 = np.array(X0, dtype=float)
    if X0.shape != (cfg.N,):
        raise ValueError(f"X0 must have length {cfg.N}")
    inputs = sample_signal(signal, n, dt)
    J_chain = params.J if cfg.input_inertia == "literal" else params.J_inv
    heads = np.empty((n + 1, 22))
    Xrec, worst, bad = rk4_lifted(X0, inputs, dt, cfg.N1, cfg.N2, cfg.g_coeff, cfg.f_coeff,
                                  cfg.s0, cfg.w_scale, cfg.v_scale, params.J_inv, J_chain,
                                  record_stride, heads)
    if bad >= 0:
        raise FloatingPointError(f"non-finite lifted state at step {bad} (t={bad * dt:.6g})")
    if worst > 1e-6:
        log.info("lifted propagation: max |R^T R - I|_F of g_0 before projection = %.3e", worst)

    times = np.arange(n + 1) * dt
    G0 = heads[:, :16].reshape(n + 1, 4, 4).transpose(0, 2, 1)
    Rs = _batch_nearest_rotation(G0[:, :3, :3])
    v = np.column_stack([heads[:, 20] * cfg.v_scale, heads[:, 21] * cfg.v_scale, heads[:, 19]])
    us = np.vstack([inputs, inputs[-1:] if n else np.zeros((1, 4))])
    states = Trajectory(times, Rs, G0[:, :3, 3].copy(), heads[:, 16:19].copy(), v, us)
    rec_idx = np.arange(0, n + 1, record_stride)
    if rec_idx[-1] != n:
        rec_idx = np.append(rec_idx, n)
    return LiftedTrajectory(times[rec_idx], Xrec, states, float(worst), cfg)


def with_orders(cfg: LiftConfig, N1: int, N2: int) -> LiftConfig:
    return replace(cfg, N1=N1, N2=N2)
