"""Nonlinear quadrotor model on SE(3), rotor/input maps and a Lie-group RK4 integrator.

State convention: ``R`` maps body to inertial, ``p`` is the inertial position,
``omega`` and ``v`` are body-frame angular and linear velocity. The equations are

    R' = R hat(omega),  p' = R v,
    J omega' = M + J hat(omega) omega,
    v' = (F/m) e3 - hat(omega) v - g R^T e3.

The transformed input ``ut = [M + J hat(omega) omega, (v')_3]`` linearises the
head of the state: ``omega' = J^-1 ut[:3]`` and ``(v')_3 = ut[3]``. Because
``hat(omega) @ omega`` is identically zero the gyroscopic term drops out.

Two reference models are driven directly by ``ut``:

``full``        the equations above, with F recovered from ``ut[3]``;
``simplified``  no gravity, so ``v' = -hat(omega) v`` laterally and
                ``(v')_3 = ut[3]``.

Two further models exist for checking the lift, each making one observable
chain exact: ``kinematic`` (``v' = ut[3] e3``, exact for the g-chain) and
``coriolis`` (``v' = -hat(omega) v`` in all components, exact for the f-chain).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Union

import numpy as np

from .linalg import cross, hat, is_rotation, rotation_exp

log = logging.getLogger(__name__)

E3 = np.array([0.0, 0.0, 1.0])
MODELS = ("full", "simplified")
DIAGNOSTIC_MODELS = ("kinematic", "coriolis")
_ALL_MODELS = MODELS + DIAGNOSTIC_MODELS


@dataclass(frozen=True)
class QuadrotorParams:
    """Physical parameters. Defaults are representative small-quadrotor values."""

    m: float = 0.5
    J: np.ndarray = field(default_factory=lambda: np.diag([2.32e-3, 2.32e-3, 4.0e-3]))
    kt: float = 1e-5
    km: float = 1e-7
    l: float = 0.175
    g: float = 9.81

    def __post_init__(self):
        J = np.array(self.J, dtype=float)
        if J.ndim == 1:
            J = np.diag(J)
        object.__setattr__(self, "J", J)
        if self.m <= 0:
            raise ValueError("mass must be positive")
        if J.shape != (3, 3) or not np.allclose(J, J.T, atol=1e-12):
            raise ValueError("J must be a symmetric 3x3 matrix")
        if np.min(np.linalg.eigvalsh(J)) <= 0:
            raise ValueError("J must be positive definite")
        if min(self.kt, self.km, self.l) <= 0:
            raise ValueError("rotor constants kt/km and arm length l must be positive")
        if self.g < 0:
            raise ValueError("g must be non-negative")
        object.__setattr__(self, "J_inv", np.linalg.inv(J))

    def mixer(self) -> np.ndarray:
        """4x4 map from squared rotor speeds to ``[F, M1, M2, M3]``."""
        kt, km, l = self.kt, self.km, self.l
        return np.array([[kt, kt, kt, kt],
                         [0.0, kt * l, 0.0, -kt * l],
                         [-kt * l, 0.0, kt * l, 0.0],
                         [km, -km, km, -km]])

    def to_dict(self) -> dict:
        return {"m": self.m, "J": self.J.tolist(), "kt": self.kt, "km": self.km,
                "l": self.l, "g": self.g}


@dataclass(frozen=True)
class QuadrotorState:
    R: np.ndarray
    p: np.ndarray
    omega: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in ("R", "p", "omega", "v"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))

    @property
    def h(self) -> np.ndarray:
        h = np.eye(4)
        h[:3, :3] = self.R
        h[:3, 3] = self.p
        return h

    def check(self, tol: float = 1e-9) -> None:
        if not is_rotation(self.R, tol):
            raise ValueError("R is not a rotation matrix")

    @classmethod
    def rest(cls) -> "QuadrotorState":
        return cls(np.eye(3), np.zeros(3), np.zeros(3), np.zeros(3))


class StateDerivative(NamedTuple):
    R_dot: np.ndarray
    p_dot: np.ndarray
    omega_dot: np.ndarray
    v_dot: np.ndarray


class InputInversion(NamedTuple):
    u: np.ndarray
    feasible: bool


def wrench_from_rotors(u, params: QuadrotorParams):
    """Collective thrust ``F`` and body moment ``M`` from squared rotor speeds."""
    u = np.asarray(u, dtype=float)
    kt, km, l = params.kt, params.km, params.l
    F = kt * u.sum()
    M = np.array([kt * l * (u[1] - u[3]), kt * l * (u[2] - u[0]), km * (u[0] - u[1] + u[2] - u[3])])
    return F, M


def nonlinear_rhs(x: QuadrotorState, u, params: QuadrotorParams) -> StateDerivative:
    F, M = wrench_from_rotors(u, params)
    J = params.J
    W = hat(x.omega)
    omega_dot = params.J_inv @ (M + J @ W @ x.omega)
    v_dot = (F / params.m) * E3 - W @ x.v - params.g * (x.R.T @ E3)
    return StateDerivative(x.R @ W, x.R @ x.v, omega_dot, v_dot)


def transform_input(x: QuadrotorState, u, params: QuadrotorParams) -> np.ndarray:
    F, M = wrench_from_rotors(u, params)
    ut = np.empty(4)
    ut[:3] = M + params.J @ hat(x.omega) @ x.omega
    v_dot = (F / params.m) * E3 - cross(x.omega, x.v) - params.g * (x.R.T @ E3)
    ut[3] = v_dot[2]
    return ut


def inverse_transform_input(x: QuadrotorState, ut, params: QuadrotorParams,
                            tol: float = 0.0) -> InputInversion:
    """Rotor inputs realising ``ut`` at state ``x``; negative entries are kept and flagged."""
    ut = np.asarray(ut, dtype=float)
    M = ut[:3] - params.J @ hat(x.omega) @ x.omega
    F = params.m * (ut[3] + cross(x.omega, x.v)[2] + params.g * (x.R.T @ E3)[2])
    u = np.linalg.solve(params.mixer(), np.concatenate([[F], M]))
    return InputInversion(u, bool(np.all(u >= -tol)))


# --- reference models driven by the transformed input ----------------------------------

def _tilde_rhs(R, omega, v, ut, params: QuadrotorParams, model: str):
    """Returns ``(p_dot, omega_dot, v_dot)``; omega_dot is ``J^-1 ut[:3]``."""
    omega_dot = params.J_inv @ ut[:3]
    if model == "kinematic":
        return R @ v, omega_dot, np.array([0.0, 0.0, ut[3]])
    wxv = cross(omega, v)
    if model == "coriolis":
        return R @ v, omega_dot, -wxv
    v_dot = np.array([-wxv[0], -wxv[1], ut[3]])
    if model == "full":
        # lateral gravity; the vertical part is absorbed into ut[3]
        v_dot[0] -= params.g * R[2, 0]
        v_dot[1] -= params.g * R[2, 1]
    return R @ v, omega_dot, v_dot


def tilde_rhs(x: QuadrotorState, ut, params: QuadrotorParams, model: str = "simplified") -> StateDerivative:
    """State derivative of a reference model under transformed input ``ut``."""
    if model not in _ALL_MODELS:
        raise ValueError(f"unknown model {model!r}")
    p_dot, omega_dot, v_dot = _tilde_rhs(x.R, x.omega, x.v, np.asarray(ut, float), params, model)
    return StateDerivative(x.R @ hat(x.omega), p_dot, omega_dot, v_dot)


# --- trajectories ------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Sampled states with the transformed input held over ``[t_k, t_{k+1})``.

    The final row of ``inputs`` repeats the last applied input.
    """

    times: np.ndarray
    R: np.ndarray
    p: np.ndarray
    omega: np.ndarray
    v: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        for name in ("R", "p", "omega", "v", "inputs"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"Trajectory.{name} length does not match times")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("Trajectory times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    def state(self, i: int) -> QuadrotorState:
        return QuadrotorState(self.R[i], self.p[i], self.omega[i], self.v[i])

    def subsample(self, stride: int) -> "Trajectory":
        idx = np.arange(0, len(self), stride)
        if idx[-1] != len(self) - 1:
            idx = np.append(idx, len(self) - 1)
        return Trajectory(self.times[idx], self.R[idx], self.p[idx], self.omega[idx],
                          self.v[idx], self.inputs[idx])

    def at_times(self, t) -> "Trajectory":
        """Rows whose time matches each entry of ``t`` (to within half a sample)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.searchsorted(self.times, t - 1e-9)
        idx = np.clip(idx, 0, len(self) - 1)
        if np.any(np.abs(self.times[idx] - t) > 1e-6):
            raise ValueError("requested times are not on the trajectory grid")
        return Trajectory(self.times[idx], self.R[idx], self.p[idx], self.omega[idx],
                          self.v[idx], self.inputs[idx])


CSV_HEADER = (["t", "px", "py", "pz"]
              + [f"r{i}{j}" for i in range(1, 4) for j in range(1, 4)]
              + ["wx", "wy", "wz", "vx", "vy", "vz", "u1", "u2", "u3", "u4"])


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """One row per sample; ``r11..r33`` list R row by row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for i in range(len(traj)):
            row = np.concatenate([[traj.times[i]], traj.p[i], traj.R[i].reshape(-1),
                                  traj.omega[i], traj.v[i], traj.inputs[i]])
            w.writerow([repr(float(x)) for x in row])


def read_trajectory_csv(path) -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Trajectory(data[:, 0], data[:, 4:13].reshape(-1, 3, 3), data[:, 1:4],
                      data[:, 13:16], data[:, 16:19], data[:, 19:23])


# --- integration -------------------------------------------------------------------------

InputSignal = Union[np.ndarray, Callable[[float], np.ndarray]]


def _input_at(signal: InputSignal, k: int, t: float) -> np.ndarray:
    if callable(signal):
        return np.asarray(signal(t), dtype=float)
    return signal[k]


def _dexpinv_neg(theta, w):
    """Right-trivialised inverse differential of exp at ``-theta`` applied to ``w``, to third order."""
    c = cross(theta, w)
    return w + 0.5 * c + cross(theta, c) / 12.0


def integrate(x0: QuadrotorState, signal: InputSignal, params: QuadrotorParams,
              t_final: float, dt: float = 1e-3, model: str = "simplified") -> Trajectory:
    """Fixed-step Runge-Kutta-Munthe-Kaas (RK4) integration on SO(3) x R^9.

    ``signal`` is either an ``(n_steps, 4)`` array of transformed inputs or a
    callable ``t -> ut`` sampled at the start of each step; the input is held
    constant over the step. The rotation is advanced multiplicatively,
    ``R <- R expm(hat(theta))``, so it stays orthogonal to round-off.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if model not in _ALL_MODELS:
        raise ValueError(f"unknown model {model!r}")
    n = int(round(t_final / dt))
    if abs(n * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError("t_final must be an integer multiple of dt")
    if not callable(signal):
        signal = np.asarray(signal, dtype=float)
        if signal.shape[0] < n:
            raise ValueError(f"input signal has {signal.shape[0]} samples, need {n}")

    times = np.arange(n + 1) * dt
    Rs = np.empty((n + 1, 3, 3))
    ps = np.empty((n + 1, 3))
    ws = np.empty((n + 1, 3))
    vs = np.empty((n + 1, 3))
    us = np.empty((n + 1, 4))
    R, p, w, v = x0.R.copy(), x0.p.copy(), x0.omega.copy(), x0.v.copy()
    Rs[0], ps[0], ws[0], vs[0] = R, p, w, v
    half = 0.5 * dt
    f = _tilde_rhs
    for k in range(n):
        ut = _input_at(signal, k, times[k])
        us[k] = ut
        # stage 1
        dp1, dw1, dv1 = f(R, w, v, ut, params, model)
        th1 = w
        # stage 2
        th = half * th1
        w2, v2 = w + half * dw1, v + half * dv1
        dp2, dw2, dv2 = f(R @ rotation_exp(th), w2, v2, ut, params, model)
        th2 = _dexpinv_neg(th, w2)
        # stage 3
        th = half * th2
        w3, v3 = w + half * dw2, v + half * dv2
        dp3, dw3, dv3 = f(R @ rotation_exp(th), w3, v3, ut, params, model)
        th3 = _dexpinv_neg(th, w3)
        # stage 4
        th = dt * th3
        w4, v4 = w + dt * dw3, v + dt * dv3
        dp4, dw4, dv4 = f(R @ rotation_exp(th), w4, v4, ut, params, model)
        th4 = _dexpinv_neg(th, w4)

        sixth = dt / 6.0
        R = R @ rotation_exp(sixth * (th1 + 2 * th2 + 2 * th3 + th4))
        p = p + sixth * (dp1 + 2 * dp2 + 2 * dp3 + dp4)
        w = w + sixth * (dw1 + 2 * dw2 + 2 * dw3 + dw4)
        v = v + sixth * (dv1 + 2 * dv2 + 2 * dv3 + dv4)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(p))
                and np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
            raise FloatingPointError(f"non-finite state at step {k + 1} (t={times[k + 1]:.6g})")
        Rs[k + 1], ps[k + 1], ws[k + 1], vs[k + 1] = R, p, w, v
    us[n] = us[n - 1] if n else 0.0
    return Trajectory(times, Rs, ps, ws, vs, us)
