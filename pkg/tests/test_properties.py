import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from se3koopman.dynamics import QuadrotorParams, QuadrotorState, inverse_transform_input, transform_input
from se3koopman.lift import LiftConfig, assemble_A, assemble_B, lift, observable_f, unlift
from se3koopman.linalg import hat, rotation_exp, vec, vee

PARAMS = QuadrotorParams()
small = st.floats(-1.0, 1.0, allow_nan=False)
vec3 = st.tuples(small, small, small).map(np.array)
angles = st.tuples(*[st.floats(-np.pi, np.pi)] * 3).map(np.array)


@st.composite
def states(draw):
    return QuadrotorState(rotation_exp(draw(angles)), 3 * draw(vec3), draw(vec3), draw(vec3))


@given(vec3, vec3)
def test_hat_cross_and_vee(a, b):
    assert np.allclose(hat(a) @ b, np.cross(a, b))
    assert np.array_equal(vee(hat(a)), a)


@given(angles)
def test_rotation_exp_is_rotation(w):
    R = rotation_exp(w)
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-12) and np.isclose(np.linalg.det(R), 1.0)
    assert np.allclose(R @ rotation_exp(-w), np.eye(3), atol=1e-12)


@given(states(), st.integers(1, 8), st.integers(1, 8))
@settings(max_examples=50, deadline=None)
def test_lift_unlift_roundtrip(x, N1, N2):
    cfg = LiftConfig(N1, N2, omega0=1.5, v0=1.5)
    y = unlift(lift(x, cfg), cfg)
    for name in ("R", "p", "omega", "v"):
        assert np.allclose(getattr(x, name), getattr(y, name), rtol=0, atol=1e-12)


@given(vec3, vec3, st.integers(0, 30))
def test_f_chain_bound(w, v, k):
    raw = LiftConfig(1, 1, normalized=False)
    assert np.linalg.norm(observable_f(w, v, k, raw)) <= np.linalg.norm(w) ** k * np.linalg.norm(v) * (1 + 1e-12) + 1e-300


@given(angles, st.integers(1, 30))
def test_g_chain_bound(w, k):
    R = rotation_exp(w[::-1])
    M = R @ np.linalg.matrix_power(hat(w), k)
    assert np.linalg.norm(vec(M)) <= (np.sqrt(2) * np.linalg.norm(w)) ** k * (1 + 1e-12) + 1e-300


@given(st.integers(1, 6), st.integers(1, 6))
@settings(max_examples=25, deadline=None)
def test_A_nilpotent(N1, N2):
    A = assemble_A(LiftConfig(N1, N2, omega0=0.7, v0=1.9))
    assert not np.any(np.linalg.matrix_power(A, max(N1, N2)))


@given(states())
@settings(max_examples=30, deadline=None)
def test_B_modes_agree(x):
    cfg = LiftConfig(5, 5, omega0=1.5, v0=1.5)
    d = assemble_B(x, PARAMS, cfg, "columnwise") - assemble_B(x, PARAMS, cfg, "closed_form")
    assert np.abs(d).max() < 1e-10


@given(states(), st.tuples(*[st.floats(1e4, 1e5)] * 4).map(np.array))
@settings(max_examples=50, deadline=None)
def test_input_transform_roundtrip(x, u):
    inv = inverse_transform_input(x, transform_input(x, u, PARAMS), PARAMS)
    assert inv.feasible and np.allclose(inv.u, u, rtol=1e-9)
