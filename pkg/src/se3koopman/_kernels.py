"""Compiled inner loop for lifted propagation.

Mirrors ``lift.unlift`` + ``lift.apply_A`` + ``lift.input_response`` for a
single input vector; ``tests/test_lift.py`` checks the two agree.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _polar(M):
    U, s, Vt = np.linalg.svd(M)
    Rm = U @ Vt
    if np.linalg.det(Rm) < 0.0:
        for i in range(3):
            U[i, 2] = -U[i, 2]
        Rm = U @ Vt
    return Rm


@njit(cache=True)
def lifted_rhs_kernel(X, ut, N1, N2, g_coeff, f_coeff, s0, wsc, vsc, J_inv, J_chain, out):
    """Writes ``A X + B(unlift(X)) ut`` into ``out``; returns the g_0 orthogonality residual."""
    N = X.shape[0]
    for i in range(N):
        out[i] = 0.0
    f_start = 4 + 16 * N1
    # A X
    for i in range(4, f_start - 16):
        out[i] = g_coeff * X[i + 16]
    for i in range(f_start, N - 3):
        out[i] = -f_coeff * X[i + 3]

    # unlift
    h = np.zeros((4, 4))
    for c in range(4):
        for r in range(4):
            h[r, c] = X[4 + 4 * c + r]
    M = h[:3, :3].copy()
    res2 = 0.0
    MtM = M.T @ M
    for i in range(3):
        for j in range(3):
            d = MtM[i, j] - (1.0 if i == j else 0.0)
            res2 += d * d
    if res2 > 0.0:
        Rm = _polar(M)
        for i in range(3):
            for j in range(3):
                h[i, j] = Rm[i, j]
    h[3, 0] = 0.0
    h[3, 1] = 0.0
    h[3, 2] = 0.0
    h[3, 3] = 1.0
    w0, w1, w2 = X[0], X[1], X[2]
    v0_ = X[f_start] * vsc
    v1_ = X[f_start + 1] * vsc
    v2_ = X[3]

    # head
    for i in range(3):
        acc = 0.0
        for j in range(3):
            acc += J_inv[i, j] * ut[j]
        out[i] += acc
    out[3] += ut[3]

    a = np.zeros(3)
    for i in range(3):
        for j in range(3):
            a[i] += J_chain[i, j] * ut[j]

    # g chain: Q_k = Q_(k-1) S + S^(k-1) Sd
    S = np.zeros((4, 4))
    S[0, 1] = -w2 / s0
    S[0, 2] = w1 / s0
    S[1, 0] = w2 / s0
    S[1, 2] = -w0 / s0
    S[2, 0] = -w1 / s0
    S[2, 1] = w0 / s0
    S[0, 3] = v0_ / s0
    S[1, 3] = v1_ / s0
    S[2, 3] = v2_ / s0
    Sd = np.zeros((4, 4))
    Sd[0, 1] = -a[2] / s0
    Sd[0, 2] = a[1] / s0
    Sd[1, 0] = a[2] / s0
    Sd[1, 2] = -a[0] / s0
    Sd[2, 0] = -a[1] / s0
    Sd[2, 1] = a[0] / s0
    Sd[2, 3] = ut[3] / s0
    Q = np.zeros((4, 4))
    Sp = np.eye(4)
    for k in range(1, N1):
        Q = Q @ S + Sp @ Sd
        Sp = Sp @ S
        HQ = h @ Q
        base = 4 + 16 * k
        for c in range(4):
            for r in range(4):
                out[base + 4 * c + r] += HQ[r, c]

    # f chain: T_k = hat(a) f_(k-1) + W T_(k-1)
    an0, an1, an2 = a[0] / wsc, a[1] / wsc, a[2] / wsc
    wn0, wn1, wn2 = w0 / wsc, w1 / wsc, w2 / wsc
    f0, f1, f2 = v0_ / vsc, v1_ / vsc, v2_ / vsc
    t0, t1, t2 = 0.0, 0.0, 0.0
    for k in range(1, N2):
        c0 = an1 * f2 - an2 * f1
        c1 = an2 * f0 - an0 * f2
        c2 = an0 * f1 - an1 * f0
        d0 = wn1 * t2 - wn2 * t1
        d1 = wn2 * t0 - wn0 * t2
        d2 = wn0 * t1 - wn1 * t0
        t0, t1, t2 = c0 + d0, c1 + d1, c2 + d2
        e0 = wn1 * f2 - wn2 * f1
        e1 = wn2 * f0 - wn0 * f2
        e2 = wn0 * f1 - wn1 * f0
        f0, f1, f2 = e0, e1, e2
        base = f_start + 3 * k
        out[base] += t0
        out[base + 1] += t1
        out[base + 2] += t2
    return np.sqrt(res2)


@njit(cache=True)
def rk4_lifted(X0, inputs, dt, N1, N2, g_coeff, f_coeff, s0, wsc, vsc, J_inv, J_chain,
               record_stride, heads):
    """Full RK4 loop. ``heads`` (n+1, 16+3+3) receives g_0, omega/v3 and f_0 each step.

    Returns the recorded lifted states and the worst g_0 orthogonality residual.
    """
    n = inputs.shape[0]
    N = X0.shape[0]
    n_rec = (n + record_stride - 1) // record_stride + 1
    if n % record_stride == 0:
        n_rec = n // record_stride + 1
    Xrec = np.empty((n_rec, N))
    X = X0.copy()
    k1 = np.empty(N)
    k2 = np.empty(N)
    k3 = np.empty(N)
    k4 = np.empty(N)
    tmp = np.empty(N)
    f_start = 4 + 16 * N1
    worst = 0.0
    r = 0
    for k in range(n + 1):
        for i in range(16):
            heads[k, i] = X[4 + i]
        for i in range(4):
            heads[k, 16 + i] = X[i]
        heads[k, 20] = X[f_start]
        heads[k, 21] = X[f_start + 1]
        if k % record_stride == 0 or k == n:
            Xrec[r] = X
            r += 1
        if k == n:
            break
        ut = inputs[k]
        res = lifted_rhs_kernel(X, ut, N1, N2, g_coeff, f_coeff, s0, wsc, vsc, J_inv, J_chain, k1)
        if res > worst:
            worst = res
        for i in range(N):
            tmp[i] = X[i] + 0.5 * dt * k1[i]
        lifted_rhs_kernel(tmp, ut, N1, N2, g_coeff, f_coeff, s0, wsc, vsc, J_inv, J_chain, k2)
        for i in range(N):
            tmp[i] = X[i] + 0.5 * dt * k2[i]
        lifted_rhs_kernel(tmp, ut, N1, N2, g_coeff, f_coeff, s0, wsc, vsc, J_inv, J_chain, k3)
        for i in range(N):
            tmp[i] = X[i] + dt * k3[i]
        lifted_rhs_kernel(tmp, ut, N1, N2, g_coeff, f_coeff, s0, wsc, vsc, J_inv, J_chain, k4)
        ok = True
        for i in range(N):
            X[i] = X[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not np.isfinite(X[i]):
                ok = False
        if not ok:
            return Xrec[:r], worst, k + 1
    return Xrec[:r], worst, -1
