import importlib.util
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, linalg

from msoc import lqr
from msoc.experiments import fixture_path

ROOT = Path(__file__).resolve().parents[1]


def random_stable(rng, n, shift=1.0):
    M = rng.normal(size=(n, n))
    return -(M @ M.T / n + shift * np.eye(n)) + 0.3 * (M - M.T) / n


def test_scalar_riccati_closed_form():
    # -2 s - 2 s^2 + 1 = 0
    sol = lqr.solve_are([[-1.0]], [[1.0]])
    assert sol.S[0, 0] == pytest.approx((math.sqrt(3) - 1) / 2, abs=1e-14)
    assert sol.eta == pytest.approx(sol.S[0, 0])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 6), m=st.integers(1, 3))
def test_matches_scipy_are(seed, n, m):
    rng = np.random.default_rng(seed)
    A = random_stable(rng, n)
    B = rng.normal(size=(n, m))
    sol = lqr.solve_are(A, B)
    # scipy solves A^T X + X A - X B R^{-1} B^T X + Q = 0
    ref = linalg.solve_continuous_are(A, B, np.eye(n), 0.5 * np.eye(m))
    assert np.allclose(sol.S, ref, rtol=1e-8, atol=1e-10)
    assert np.allclose(sol.S, sol.S.T)
    assert np.all(np.linalg.eigvalsh(sol.S) > 0)
    assert sol.residual_norm <= 1e-10
    assert lqr.is_hurwitz(A - 2 * B @ B.T @ sol.S)


def test_riccati_ode_limit():
    rng = np.random.default_rng(1)
    A = random_stable(rng, 3)
    B = rng.normal(size=(3, 2))

    def rhs(t, s):
        S = s.reshape(3, 3)
        return (A.T @ S + S @ A - 2 * S @ B @ B.T @ S + np.eye(3)).ravel()

    out = integrate.solve_ivp(rhs, (0, 60), np.zeros(9), rtol=1e-11, atol=1e-13)
    assert np.allclose(out.y[:, -1].reshape(3, 3), lqr.solve_are(A, B).S, atol=1e-8)


def test_lyapunov_integral_identity():
    rng = np.random.default_rng(2)
    A22 = random_stable(rng, 4)
    B2 = rng.normal(size=(4, 2))
    sys = lqr.SlowFastLinearSystem(-np.eye(2), np.zeros((2, 4)), np.zeros((4, 2)), A22, np.ones((2, 2)), B2,
                                   beta=0.5)
    red = lqr.reduce(sys)

    def integrand(t):
        E = linalg.expm(A22 * t)
        return np.trace(E @ B2 @ B2.T @ E.T)

    quad = integrate.quad(integrand, 0, 60, limit=200, epsabs=1e-13, epsrel=1e-12)[0]
    assert np.trace(red.fast_covariance) == pytest.approx(quad, rel=1e-6)
    assert red.Q == pytest.approx(2 / 0.5 * quad, rel=1e-6)


def test_reduction_formulas():
    rng = np.random.default_rng(4)
    A11, A12, A21 = rng.normal(size=(2, 2)), rng.normal(size=(2, 3)), rng.normal(size=(3, 2))
    A22 = random_stable(rng, 3)
    B1, B2 = rng.normal(size=(2, 1)), rng.normal(size=(3, 1))
    red = lqr.reduce(lqr.SlowFastLinearSystem(A11, A12, A21, A22, B1, B2))
    inv = np.linalg.inv(A22)
    assert np.allclose(red.A_bar, A11 - A12 @ inv @ A21)
    assert np.allclose(red.B_bar, math.sqrt(2) * (B1 - A12 @ inv @ B2))


def test_assemble_scaling():
    sys = lqr.SlowFastLinearSystem(np.eye(1), 2 * np.eye(1), 3 * np.eye(1), -np.eye(1), np.eye(1), np.eye(1),
                                   epsilon=0.5)
    A, B = lqr.assemble(sys)
    assert np.allclose(A, [[1, 4], [6, -4]])
    assert np.allclose(B, math.sqrt(2) * np.array([[1], [2]]))


def test_error_cases():
    with pytest.raises(lqr.StabilityError):
        lqr.solve_are([[1.0]], [[1.0]])
    with pytest.raises(lqr.StabilityError):
        lqr.solve_are([[-1.0]], [[0.0]])
    with pytest.raises(lqr.ShapeError):
        lqr.solve_are(np.eye(2), np.ones((3, 1)))
    with pytest.raises(lqr.ShapeError):
        lqr.SlowFastLinearSystem(np.eye(2), np.zeros((2, 2)), np.zeros((3, 2)), -np.eye(2), np.ones((2, 1)),
                                 np.ones((2, 1)))
    with pytest.raises(lqr.ReductionError):
        lqr.reduce(lqr.SlowFastLinearSystem(-np.eye(1), np.eye(1), np.eye(1), np.eye(1), np.eye(1), np.eye(1)))
    assert not lqr.is_controllable(np.diag([-1.0, -2.0]), np.array([[1.0], [0.0]]))
    assert lqr.is_controllable(np.array([[-1.0, 1.0], [0.0, -2.0]]), np.array([[0.0], [1.0]]))


def test_shipped_fixture_matches_recorded_seed():
    spec = importlib.util.spec_from_file_location("make_lqr_fixtures", ROOT / "tools" / "make_lqr_fixtures.py")
    gen = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(gen)
    loaded = lqr.load_system(fixture_path("synthetic"))
    fresh = gen.synthetic()
    for name in ("A11", "A12", "A21", "A22", "B1", "B2"):
        assert np.array_equal(getattr(loaded, name), getattr(fresh, name))
    assert (loaded.k, loaded.n, loaded.l, loaded.beta) == (2, 6, 2, 0.01)


def test_decoupled_fixture_is_exact():
    study = lqr.convergence_study(lqr.load_system(fixture_path("decoupled")), [0.2, 0.1, 0.05, 0.025])
    assert all(r.error is None and r.err_11 <= 1e-12 for r in study.rows)


def test_synthetic_fixture_rate():
    study = lqr.convergence_study(lqr.load_system(fixture_path("synthetic")), [0.2, 0.1, 0.05, 0.025])
    assert 1.7 <= study.slope() <= 2.3
    assert all(r.are_residual <= 1e-10 for r in study.rows)
    # the off-diagonal and fast blocks shrink like eps
    res = [r.norm_residual_block for r in study.rows]
    assert all(b < a for a, b in zip(res, res[1:]))


def test_ergodic_constant_convergence():
    sys = lqr.load_system(fixture_path("synthetic"))
    study = lqr.convergence_study(sys, [0.05])
    A, B = lqr.assemble(sys.with_epsilon(0.05))
    sol = lqr.solve_are(A, B)
    assert sol.eta == pytest.approx(np.trace(B @ B.T @ sol.S))
    assert lqr.reduced_eta(study.reduced_system, study.reduced, include_Q=False) == pytest.approx(
        np.trace(study.reduced_system.B_bar @ study.reduced_system.B_bar.T @ study.reduced.S))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.integers(1, 3), n_fast=st.integers(1, 3), l=st.integers(1, 2))
def test_save_load_round_trip(tmp_path_factory, seed, k, n_fast, l):
    rng = np.random.default_rng(seed)
    sys = lqr.SlowFastLinearSystem(rng.normal(size=(k, k)), rng.normal(size=(k, n_fast)),
                                   rng.normal(size=(n_fast, k)), random_stable(rng, n_fast),
                                   rng.normal(size=(k, l)), rng.normal(size=(n_fast, l)), epsilon=0.3,
                                   beta=float(rng.uniform(0.01, 2)))
    path = tmp_path_factory.mktemp("lqr") / "sys.txt"
    lqr.save_system(sys, path)
    back = lqr.load_system(path, validate=False)
    for name in ("A11", "A12", "A21", "A22", "B1", "B2"):
        assert np.array_equal(getattr(back, name), getattr(sys, name))
    assert back.beta == sys.beta and back.epsilon == sys.epsilon


def test_format_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("msoc-lqr-blocks v1\nk 1\nn 2\nl 1\nbeta 1.0\nA11 1 1\nnot-a-number\n")
    with pytest.raises(lqr.FormatError) as info:
        lqr.load_system(path)
    assert info.value.line_no == 7
    path.write_text("wrong header\n")
    with pytest.raises(lqr.FormatError):
        lqr.load_system(path)
