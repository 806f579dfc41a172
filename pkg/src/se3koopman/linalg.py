"""Matrix utilities for SO(3)/SE(3): hat/vee, column-major vec, powers, exp, Euler angles."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

SKEW_TOL = 1e-9
GIMBAL_TOL = 1e-6


def hat(a) -> np.ndarray:
    """Skew-symmetric matrix with ``hat(a) @ b == cross(a, b)``."""
    x, y, z = np.asarray(a, dtype=float)
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def vee(M, tol: float = SKEW_TOL) -> np.ndarray:
    """Inverse of :func:`hat`. Raises ``ValueError`` if ``M`` is not skew within ``tol``."""
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3):
        raise ValueError(f"vee expects a 3x3 matrix, got shape {M.shape}")
    asym = np.max(np.abs(M + M.T))
    if asym > tol:
        raise ValueError(f"matrix is not skew-symmetric (max |M + M^T| = {asym:.3e})")
    return 0.5 * np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])


def cross(a, b) -> np.ndarray:
    # np.cross carries a lot of per-call overhead for 3-vectors
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def vec(M) -> np.ndarray:
    """Stack the columns of ``M`` into one vector (column-major)."""
    return np.asarray(M, dtype=float).reshape(-1, order="F")


def unvec(x, rows: int, cols: int) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(rows, cols, order="F")


def matrix_power(M, k: int) -> np.ndarray:
    """``M**k`` by repeated multiplication; ``M**0`` is the identity.

    No spectral shortcuts: twist matrices are non-normal and can be nilpotent.
    """
    if k < 0:
        raise ValueError("matrix_power needs k >= 0")
    M = np.asarray(M, dtype=float)
    out = np.eye(M.shape[0])
    for _ in range(k):
        out = out @ M
    return out


def twist(omega, v) -> np.ndarray:
    """4x4 matrix ``[[hat(omega), v], [0, 0]]``."""
    S = np.zeros((4, 4))
    S[:3, :3] = hat(omega)
    S[:3, 3] = v
    return S


def pose(R, p) -> np.ndarray:
    """Homogeneous 4x4 matrix ``[[R, p], [0, 1]]``."""
    h = np.eye(4)
    h[:3, :3] = R
    h[:3, 3] = p
    return h


def rotation_exp(w) -> np.ndarray:
    """Rodrigues formula for ``expm(hat(w))``."""
    w = np.asarray(w, dtype=float)
    th2 = float(w @ w)
    W = hat(w)
    if th2 < 1e-12:
        # Taylor coefficients accurate to O(th^6)
        a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0
        b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0
    else:
        th = np.sqrt(th2)
        a = np.sin(th) / th
        b = (1.0 - np.cos(th)) / th2
    return np.eye(3) + a * W + b * (W @ W)


def orthogonality_residual(R) -> float:
    R = np.asarray(R, dtype=float)
    return float(np.linalg.norm(R.T @ R - np.eye(3)))


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    return orthogonality_residual(R) <= tol and abs(np.linalg.det(R) - 1.0) <= tol


def nearest_rotation(M) -> np.ndarray:
    """Orthogonal polar factor of ``M`` with det forced to +1."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    return U @ D @ Vt


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class EulerAngles(NamedTuple):
    roll: float
    pitch: float
    yaw: float
    gimbal_lock: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.roll, self.pitch, self.yaw])


def euler_zyx(R) -> EulerAngles:
    """Roll/pitch/yaw with ``R = rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)``.

    At gimbal lock (pitch within 1e-6 of +-pi/2) yaw is set to 0, the roll
    absorbs the remaining freedom and ``gimbal_lock`` is True.
    """
    R = np.asarray(R, dtype=float)
    sp = float(np.clip(-R[2, 0], -1.0, 1.0))
    pitch = float(np.arcsin(sp))
    if abs(abs(pitch) - np.pi / 2) < GIMBAL_TOL:
        roll = float(np.arctan2(sp * R[0, 1], R[1, 1]))
        return EulerAngles(roll, pitch, 0.0, True)
    roll = float(np.arctan2(R[2, 1], R[2, 2]))
    yaw = float(np.arctan2(R[1, 0], R[0, 0]))
    return EulerAngles(roll, pitch, yaw, False)


def euler_zyx_batch(Rs) -> np.ndarray:
    """Vectorised :func:`euler_zyx` for a stack ``(K, 3, 3)``; returns ``(K, 3)``.

    Uses the regular branch everywhere; callers that may hit gimbal lock should
    use the scalar version.
    """
    Rs = np.asarray(Rs, dtype=float)
    pitch = np.arcsin(np.clip(-Rs[:, 2, 0], -1.0, 1.0))
    roll = np.arctan2(Rs[:, 2, 1], Rs[:, 2, 2])
    yaw = np.arctan2(Rs[:, 1, 0], Rs[:, 0, 0])
    return np.stack([roll, pitch, yaw], axis=1)


def wrap_angle(a):
    """Map angles to [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi
