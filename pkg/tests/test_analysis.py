import numpy as np
import pytest

from conftest import random_state
from se3koopman.analysis import (approximation_error, bound_audit, controllability_rank,
                                 convergence_audit, literal_term_audit, numeric_rank,
                                 recover_input, recovery_experiment, recovery_objective,
                                 relative_error)
from se3koopman.dynamics import QuadrotorState, Trajectory
from se3koopman.lift import DomainBounds, LiftConfig, assemble_B, selector_B
from se3koopman.linalg import rotation_exp

CFG = LiftConfig(5, 5, omega0=0.9, v0=1.2)


def test_recovery_consistent_system(rng, params, state):
    B = assemble_B(state, params, CFG)
    u0 = rng.normal(size=4)
    # U* chosen so that Bsel U* = B u0 (head and chain blocks pass through the selector)
    U = B @ u0
    r = recover_input(state, U, CFG, params)
    assert r.relative_residual < 1e-10 and r.rank == 4
    assert np.allclose(r.u_tilde, u0)


def test_recovery_zero(params, state):
    r = recover_input(state, np.zeros(CFG.N), CFG, params)
    assert np.array_equal(r.u_tilde, np.zeros(4)) and r.residual == 0 and r.relative_residual == 0


def test_recovery_optimality(rng, params, state):
    U = rng.uniform(-30, 30, CFG.N)
    B = assemble_B(state, params, CFG)
    target = selector_B(CFG) @ U
    r = recover_input(state, U, CFG, params, B)
    base = recovery_objective(B, target, r.u_tilde)
    assert np.isclose(base, r.objective())
    for _ in range(100):
        assert recovery_objective(B, target, r.u_tilde + 0.01 * rng.normal(size=4)) >= base


def test_moore_penrose(rng, params):
    for _ in range(5):
        B = assemble_B(random_state(rng), params, CFG)
        P = np.linalg.pinv(B)
        assert np.abs(B @ P @ B - B).max() < 1e-8


def test_recovery_experiment_shapes(params):
    x0 = QuadrotorState(np.eye(3), np.zeros(3), [0.05] * 3, [0.1] * 3)
    cfg = LiftConfig.for_envelope(3, 3, 0.1, 0.2)
    run = recovery_experiment(x0, cfg, params, t_final=1.0, amplitude=1.0, n_samples=4, seed=3)
    assert run.relative_residuals.shape == (4,) and run.u_tilde.shape == (4, 4)
    assert np.all((run.relative_residuals >= 0) & (run.relative_residuals <= 1 + 1e-12))
    again = recovery_experiment(x0, cfg, params, t_final=1.0, amplitude=1.0, n_samples=4, seed=3)
    assert np.array_equal(run.relative_residuals, again.relative_residuals)


@pytest.mark.parametrize("n, N", [(2, 42), (3, 61), (5, 99)])
def test_controllability_full_rank(n, N):
    rr = controllability_rank(LiftConfig(n, n))
    assert rr.N == N and rr.rank == N and rr.full_rank
    assert all(b >= a for a, b in zip(rr.rank_by_power, rr.rank_by_power[1:]))


def test_controllability_zero_B():
    cfg = LiftConfig(2, 2)
    assert controllability_rank(cfg, B=np.zeros((cfg.N, cfg.N))).rank == 0


def test_controllability_size_guard():
    with pytest.raises(MemoryError):
        controllability_rank(LiftConfig(80, 10))


def test_numeric_rank_tolerance():
    M = np.diag([1.0, 1e-3, 1e-20])
    r, s, tol = numeric_rank(M)
    assert r == 2 and np.isclose(tol, 3 * np.finfo(float).eps)


def test_bound_audit_small():
    assert bound_audit(samples=500, k_max=30, seed=1) == {"f_bound": 0, "g_bound": 0}


def test_convergence_audit_default_domain():
    rep = convergence_audit(DomainBounds(), samples=2000, k_max=30, seed=2)
    assert rep.passed and not rep.domain_violation and rep.n_excluded == 0
    assert rep.tail_f < 1e-3 and rep.tail_g < 1e-3


def test_convergence_audit_domain_guard():
    with pytest.warns(RuntimeWarning):
        rep = convergence_audit(DomainBounds(omega_bar=0.8), samples=2000, k_max=30, seed=2)
    assert rep.domain_violation and rep.n_excluded > 0
    assert not any(v for k, v in rep.violations.items() if k != "tail")


def test_literal_audit_outcome(rng, state):
    terms = literal_term_audit(state, rng.normal(size=3), 4)
    f = {(d.k, d.i): d.status for d in terms if d.chain == "f"}
    assert f[(1, 1)] == "match"
    assert {d.status for d in terms if d.chain == "g" and d.i == 1} == {"undefined"}
    assert len(terms) == 2 * sum(range(1, 5))


def _traj(R, p, v):
    n = len(p)
    return Trajectory(np.arange(n) * 0.1, R, p, np.zeros((n, 3)), v, np.zeros((n, 4)))


def test_error_identical_is_zero(rng):
    R = np.array([rotation_exp(rng.uniform(-1, 1, 3)) for _ in range(5)])
    t = _traj(R, rng.normal(size=(5, 3)), rng.normal(size=(5, 3)))
    e = approximation_error(t, t)
    assert not np.any(e.position) and not np.any(e.velocity) and not np.any(e.angles)


def test_error_scaling(rng):
    R = np.array([rotation_exp([0.1, 0.2, 0.3])] * 4)
    p = rng.normal(size=(4, 3))
    a = _traj(R, 1.01 * p, 1.01 * p)
    e = approximation_error(a, _traj(R, p, p))
    assert np.allclose(e.position, 0.01) and np.allclose(e.velocity, 0.01)


def test_error_floor_and_grid():
    out = relative_error(np.ones((2, 3)), np.array([[0.0, 0, 0], [1.0, 1, 1]]))
    assert np.isnan(out[0]) and out[1] == 0
    R = np.repeat(np.eye(3)[None], 3, axis=0)
    a = _traj(R, np.ones((3, 3)), np.ones((3, 3)))
    b = Trajectory(np.arange(3) * 0.2, R, np.ones((3, 3)), np.zeros((3, 3)), np.ones((3, 3)),
                   np.zeros((3, 4)))
    with pytest.raises(ValueError):
        approximation_error(a, b)
    with pytest.raises(ValueError):
        approximation_error(a, a).at(0.05)


def test_error_invariant_under_frame_rotation(rng):
    n = 4
    Ra = np.array([rotation_exp(rng.uniform(-0.5, 0.5, 3)) for _ in range(n)])
    p, q = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
    Q = rotation_exp([0.3, -0.4, 0.2])
    e1 = approximation_error(_traj(Ra, p, p), _traj(Ra, q, q))
    e2 = approximation_error(_traj(Ra, p @ Q.T, p), _traj(Ra, q @ Q.T, q))
    assert np.allclose(e1.position, e2.position)
