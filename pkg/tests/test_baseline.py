import numpy as np
import pytest

from se3koopman.baseline import (DICT_SIZE, LABELS, NINTH_PRODUCT, fit_edmdc, fit_residual,
                                 lift_baseline, predict_baseline, training_data)
from se3koopman.dynamics import QuadrotorParams, QuadrotorState
from se3koopman.linalg import rotation_exp


def _state(w, v, R=None):
    return QuadrotorState(np.eye(3) if R is None else R, np.zeros(3), w, v)


def test_dictionary_at_rest():
    z = lift_baseline(_state(np.zeros(3), np.zeros(3)), g=9.81)
    assert z.shape == (DICT_SIZE,) and len(LABELS) == DICT_SIZE
    assert np.array_equal(z[:3], [0, 0, -9.81]) and not np.any(z[3:])


def test_dictionary_products():
    z = dict(zip(LABELS, lift_baseline(_state([1.0, 0, 0], [0, 1.0, 0]))))
    assert z["v2w1"] == 1.0
    assert all(z[k] == 0 for k in LABELS[9:] if k != "v2w1")
    assert NINTH_PRODUCT == ("v", 0, 1) and LABELS[-1] == "v1w2"


def test_dictionary_homogeneity(rng):
    w, v = rng.normal(size=3), rng.normal(size=3)
    z1 = lift_baseline(_state(w, v))
    z2 = lift_baseline(_state(2 * w, v))
    assert np.allclose(z2[3:6], 2 * z1[3:6])
    assert np.allclose(z2[14:17], 4 * z1[14:17])
    assert np.allclose(z2[9:14], 2 * z1[9:14])


def test_dictionary_body_gravity():
    R = rotation_exp([0.0, np.pi / 2, 0.0])
    z = lift_baseline(_state(np.zeros(3), np.zeros(3), R), 9.81, "body")
    assert np.allclose(z[:3], R.T @ [0, 0, -9.81])
    with pytest.raises(ValueError):
        lift_baseline(_state(np.zeros(3), np.zeros(3)), 9.81, "sideways")


def test_exact_recovery_of_linear_system(rng):
    nz, nu, m = 6, 2, 200
    A0 = 0.3 * rng.normal(size=(nz, nz))
    B0 = rng.normal(size=(nz, nu))
    Z = rng.normal(size=(nz, m))
    U = rng.normal(size=(nu, m))
    fit = fit_edmdc(Z, A0 @ Z + B0 @ U, U)
    assert np.abs(fit.A_d - A0).max() < 1e-8 and np.abs(fit.B_d - B0).max() < 1e-8
    assert not fit.rank_deficient and fit.residual < 1e-10


def test_duplicate_snapshots_flag_rank(rng):
    z = rng.normal(size=(5, 1))
    u = rng.normal(size=(2, 1))
    fit = fit_edmdc(np.repeat(z, 20, axis=1), np.repeat(z, 20, axis=1), np.repeat(u, 20, axis=1))
    assert fit.rank_deficient and fit.rank == 1


def test_fit_input_validation(rng):
    with pytest.raises(ValueError):
        fit_edmdc(rng.normal(size=(5, 4)), rng.normal(size=(5, 4)), rng.normal(size=(2, 4)))
    with pytest.raises(ValueError):
        fit_edmdc(rng.normal(size=(5, 9)), rng.normal(size=(5, 8)), rng.normal(size=(2, 9)))


def test_fit_optimality(rng):
    Z = rng.normal(size=(6, 100))
    U = rng.normal(size=(2, 100))
    Zp = np.tanh(Z) + 0.1 * rng.normal(size=Z.shape)
    fit = fit_edmdc(Z, Zp, U)
    base = fit_residual(fit.A_d, fit.B_d, Z, Zp, U)
    assert np.isclose(base, fit.residual)
    for _ in range(100):
        dA = 1e-3 * rng.normal(size=fit.A_d.shape)
        dB = 1e-3 * rng.normal(size=fit.B_d.shape)
        assert fit_residual(fit.A_d + dA, fit.B_d + dB, Z, Zp, U) >= base


def _signal(n, dt, seed):
    return 1e-3 * np.random.default_rng(seed).uniform(-5, 5, size=(n, 4))


def test_training_is_deterministic(tmp_path):
    p = QuadrotorParams()
    a = training_data(p, _signal, n_trajectories=2, horizon=0.2, seed=7)
    b = training_data(p, _signal, n_trajectories=2, horizon=0.2, seed=7)
    for x, y in zip(a[:3], b[:3]):
        assert np.array_equal(x, y)
    assert a[3].to_json() == b[3].to_json()
    fa, fb = fit_edmdc(*a[:3]), fit_edmdc(*b[:3])
    assert np.array_equal(fa.A_d, fb.A_d) and np.array_equal(fa.B_d, fb.B_d)
    fa.write_csv(tmp_path / "a.csv")
    fb.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_predict_identity_model_is_constant():
    from se3koopman.baseline import FitResult

    fit = FitResult(np.eye(DICT_SIZE), np.zeros((DICT_SIZE, 4)), 0.0, 22, 1.0, False, 1e-3, 0)
    x0 = QuadrotorState(rotation_exp([0.1, 0.2, 0.3]), [1.0, 2.0, 3.0], np.zeros(3), np.zeros(3))
    tr = predict_baseline(fit, x0, np.zeros((50, 4)))
    assert np.allclose(tr.R, x0.R) and np.allclose(tr.p, x0.p) and not np.any(tr.v)


def test_predict_divergence_raises():
    from se3koopman.baseline import FitResult

    fit = FitResult(1e200 * np.eye(DICT_SIZE), np.zeros((DICT_SIZE, 4)), 0.0, 22, 1.0, False, 1e-3, 0)
    with pytest.raises(FloatingPointError):
        predict_baseline(fit, QuadrotorState.rest(), np.zeros((10, 4)))
