"""Data-driven comparator: an 18-entry polynomial dictionary fitted by EDMD with control."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .analysis import numeric_rank
from .dynamics import QuadrotorParams, QuadrotorState, Trajectory, integrate
from .linalg import rotation_exp

DICT_SIZE = 18
N_INPUTS = 4

# (v index, w index) or ("w", i, j) products, 0-based. The last entry is not in
# the printed eight-product list; it completes the v_i w_j pattern.
PRODUCTS = (("v", 2, 2), ("v", 1, 2), ("v", 2, 0), ("v", 0, 2), ("v", 1, 0),
            ("w", 1, 2), ("w", 0, 2), ("w", 0, 1),
            ("v", 0, 1))
NINTH_PRODUCT = PRODUCTS[-1]

LABELS = (["ag1", "ag2", "ag3", "w1", "w2", "w3", "v1", "v2", "v3"]
          + [("v%dw%d" % (a + 1, b + 1)) if kind == "v" else ("w%dw%d" % (a + 1, b + 1))
             for kind, a, b in PRODUCTS])


def lift_baseline(x: QuadrotorState, g: float = 9.81, gravity_frame: str = "inertial") -> np.ndarray:
    """``[a_g, w, v, products]``.

    ``a_g`` is the constant ``(0, 0, -g)`` (``gravity_frame='inertial'``) or the
    gravity vector expressed in the body frame ``R^T (0, 0, -g)``.
    """
    return lift_baseline_batch(x.R[None], x.omega[None], x.v[None], g, gravity_frame)[0]


def lift_baseline_batch(R, omega, v, g: float = 9.81, gravity_frame: str = "inertial") -> np.ndarray:
    omega = np.atleast_2d(omega)
    v = np.atleast_2d(v)
    n = len(omega)
    Z = np.empty((n, DICT_SIZE))
    ag = np.array([0.0, 0.0, -g])
    if gravity_frame == "inertial":
        Z[:, :3] = ag
    elif gravity_frame == "body":
        Z[:, :3] = np.einsum("nji,j->ni", np.asarray(R), ag)
    else:
        raise ValueError(f"unknown gravity_frame {gravity_frame!r}")
    Z[:, 3:6] = omega
    Z[:, 6:9] = v
    for c, (kind, a, b) in enumerate(PRODUCTS):
        left = v[:, a] if kind == "v" else omega[:, a]
        Z[:, 9 + c] = left * omega[:, b]
    return Z


@dataclass
class FitResult:
    A_d: np.ndarray
    B_d: np.ndarray
    residual: float
    rank: int
    cond: float
    rank_deficient: bool
    dt: float
    n_snapshots: int
    gravity_frame: str = "inertial"
    g: float = 9.81

    def write_csv(self, path) -> None:
        """``[A_d | B_d]`` row by row with a label column; diagnostics in a trailing comment."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row"] + [f"A_{l}" for l in LABELS] + [f"B_u{j + 1}" for j in range(N_INPUTS)])
            for i, lab in enumerate(LABELS):
                w.writerow([lab] + [repr(float(x)) for x in self.A_d[i]]
                           + [repr(float(x)) for x in self.B_d[i]])
            fh.write(f"# residual={self.residual!r} rank={self.rank} cond={self.cond!r} "
                     f"rank_deficient={self.rank_deficient} dt={self.dt!r} "
                     f"n_snapshots={self.n_snapshots}\n")


def fit_edmdc(Z, Zp, U, dt: float = 1e-3, gravity_frame: str = "inertial", g: float = 9.81) -> FitResult:
    """Least-squares ``[A_d B_d] = Z' [Z; U]^+`` with snapshots as columns."""
    Z = np.asarray(Z, dtype=float)
    Zp = np.asarray(Zp, dtype=float)
    U = np.asarray(U, dtype=float)
    nz, m = Z.shape
    nu = U.shape[0]
    if Zp.shape != Z.shape or U.shape[1] != m:
        raise ValueError("Z, Z' and U must have the same number of columns")
    if m < nz + nu:
        raise ValueError(f"need at least {nz + nu} snapshot pairs, got {m}")
    G = np.vstack([Z, U])
    sol, _, _, _ = np.linalg.lstsq(G.T, Zp.T, rcond=None)
    AB = sol.T
    rank, s, _ = numeric_rank(G)
    cond = float(s[0] / s[-1]) if s[-1] > 0 else np.inf
    res = float(np.linalg.norm(Zp - AB @ G))
    return FitResult(AB[:, :nz], AB[:, nz:], res, rank, cond, rank < nz + nu, dt, m,
                     gravity_frame, g)


def fit_residual(A_d, B_d, Z, Zp, U) -> float:
    return float(np.linalg.norm(Zp - A_d @ Z - B_d @ U))


def snapshots_from_trajectory(traj: Trajectory, g: float = 9.81, gravity_frame: str = "inertial"):
    Zall = lift_baseline_batch(traj.R, traj.omega, traj.v, g, gravity_frame).T
    return Zall[:, :-1], Zall[:, 1:], traj.inputs[:-1].T


@dataclass
class TrainingManifest:
    seed: int
    n_trajectories: int
    horizon: float
    dt: float
    model: str
    omega_range: float
    v_range: float
    initial_states: list = field(default_factory=list)
    signal_seeds: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def training_data(params: QuadrotorParams, signal_fn, n_trajectories: int = 20, horizon: float = 10.0,
                  dt: float = 1e-3, model: str = "simplified", seed: int = 0,
                  omega_range: float = 0.15, v_range: float = 0.3,
                  gravity_frame: str = "inertial"):
    """Snapshot matrices from random-start runs of the reference model.

    ``signal_fn(n_steps, dt, seed)`` returns an ``(n_steps, 4)`` input array.
    Initial velocities are uniform per component in ``[-range, range]``;
    attitude starts at identity.
    """
    rng = np.random.default_rng(seed)
    n = int(round(horizon / dt))
    man = TrainingManifest(seed, n_trajectories, horizon, dt, model, omega_range, v_range)
    Zs, Zps, Us = [], [], []
    for _ in range(n_trajectories):
        w0 = rng.uniform(-omega_range, omega_range, 3)
        v0 = rng.uniform(-v_range, v_range, 3)
        s = int(rng.integers(0, 2**63 - 1))
        x0 = QuadrotorState(np.eye(3), np.zeros(3), w0, v0)
        traj = integrate(x0, signal_fn(n, dt, s), params, horizon, dt, model)
        Z, Zp, U = snapshots_from_trajectory(traj, params.g, gravity_frame)
        Zs.append(Z)
        Zps.append(Zp)
        Us.append(U)
        man.initial_states.append({"omega": w0.tolist(), "v": v0.tolist()})
        man.signal_seeds.append(s)
    return np.hstack(Zs), np.hstack(Zps), np.hstack(Us), man


def predict_baseline(fit: FitResult, x0: QuadrotorState, inputs, dt=None) -> Trajectory:
    """Free-run ``z_(k+1) = A_d z_k + B_d u_k`` from ``x0``.

    Angular and linear velocity are read from the dictionary state; attitude is
    rebuilt by integrating the predicted angular velocity through the rotation
    exponential and position by integrating the predicted body velocity through
    that attitude (both with the trapezoidal rule).
    """
    dt = fit.dt if dt is None else dt
    inputs = np.asarray(inputs, dtype=float)
    n = len(inputs)
    z = lift_baseline(x0, fit.g, fit.gravity_frame)
    Zs = np.empty((n + 1, DICT_SIZE))
    Zs[0] = z
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            z = fit.A_d @ z + fit.B_d @ inputs[k]
            Zs[k + 1] = z
    if not np.all(np.isfinite(Zs)):
        raise FloatingPointError("baseline prediction diverged")
    w = Zs[:, 3:6]
    v = Zs[:, 6:9]
    Rs = np.empty((n + 1, 3, 3))
    ps = np.empty((n + 1, 3))
    Rs[0], ps[0] = x0.R, x0.p
    for k in range(n):
        Rs[k + 1] = Rs[k] @ rotation_exp(0.5 * dt * (w[k] + w[k + 1]))
        ps[k + 1] = ps[k] + 0.5 * dt * (Rs[k] @ v[k] + Rs[k + 1] @ v[k + 1])
    us = np.vstack([inputs, inputs[-1:] if n else np.zeros((1, 4))])
    return Trajectory(np.arange(n + 1) * dt, Rs, ps, w.copy(), v.copy(), us)
