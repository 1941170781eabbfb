import math
import warnings

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from msoc import fk_pde, models
from msoc.fk_pde import Grid1D, ScalarModel1D


def bm_exit(beta=1.0, cost=1.0, sigma=1.0, left="absorbing"):
    return ScalarModel1D(drift=0.0, diffusion=sigma**2, cost=cost, beta=beta, left=left, right="absorbing")


def test_bm_exit_closed_form():
    sol = fk_pde.solve_linear_bvp(bm_exit(), Grid1D(-1.0, 1.0, 2001))
    assert abs(sol.psi[1000] - 1.0 / math.cosh(math.sqrt(2.0))) < 1e-6
    # psi(x) = cosh(sqrt2 x) / cosh(sqrt2)
    exact = np.cosh(math.sqrt(2.0) * sol.x) / math.cosh(math.sqrt(2.0))
    assert np.max(np.abs(sol.psi - exact)) < 1e-6


def test_second_order_convergence():
    errs = []
    for n in (101, 201, 401):
        sol = fk_pde.solve_linear_bvp(bm_exit(), Grid1D(-1.0, 1.0, n))
        errs.append(abs(sol.psi[n // 2] - 1.0 / math.cosh(math.sqrt(2.0))))
    assert 3.5 < errs[0] / errs[1] < 4.5
    assert 3.5 < errs[1] / errs[2] < 4.5


def test_constant_drift_closed_form():
    # (a/(2 beta)) psi'' + b psi' - beta g psi = 0 on (0, 1), psi = 1 at both ends
    a, b, g, beta = 0.7, 0.4, 1.3, 2.0
    c2 = a / (2 * beta)
    disc = math.sqrt(b * b + 4 * c2 * beta * g)
    r1, r2 = (-b + disc) / (2 * c2), (-b - disc) / (2 * c2)
    # psi = A e^{r1 x} + B e^{r2 x}
    M = np.array([[1.0, 1.0], [math.exp(r1), math.exp(r2)]])
    A, B = np.linalg.solve(M, [1.0, 1.0])
    model = ScalarModel1D(drift=b, diffusion=a, cost=g, beta=beta, left="absorbing", right="absorbing")
    sol = fk_pde.solve_linear_bvp(model, Grid1D(0.0, 1.0, 2001))
    exact = A * np.exp(r1 * sol.x) + B * np.exp(r2 * sol.x)
    assert np.max(np.abs(sol.psi - exact)) < 1e-6


def test_reflecting_half_domain_matches_symmetric_problem():
    full = fk_pde.solve_linear_bvp(bm_exit(), Grid1D(-1.0, 1.0, 2001))
    half = fk_pde.solve_linear_bvp(bm_exit(left="reflecting"), Grid1D(0.0, 1.0, 1001))
    assert np.max(np.abs(full.psi[1000:] - half.psi)) < 1e-6


def test_policy_iteration_matches_log_transform():
    model = bm_exit(beta=1.5)
    grid = Grid1D(-1.0, 1.0, 2001)
    lin = fk_pde.solve_linear_bvp(model, grid)
    pi = fk_pde.solve_hjb_policy_iteration(model, grid)
    assert np.max(np.abs(lin.value - pi.value)) < 1e-5
    assert pi.n_iter >= 2


def test_policy_iteration_limit():
    with pytest.raises(fk_pde.IterationLimitError) as info:
        fk_pde.solve_hjb_policy_iteration(bm_exit(), Grid1D(-1.0, 1.0, 201), max_iter=1)
    assert info.value.n_iter == 1


def test_optimal_control_cost_equals_value():
    model = bm_exit(beta=0.8)
    grid = Grid1D(-1.0, 1.0, 2001)
    sol = fk_pde.solve_linear_bvp(model, grid)
    J = fk_pde.policy_cost(model, grid, sol.control)
    assert np.max(np.abs(J - sol.value)) < 1e-5
    # any other feedback costs more
    J_zero = fk_pde.policy_cost(model, grid, np.zeros_like(sol.x))
    assert np.all(J_zero >= sol.value - 1e-9)


def test_mean_exit_time_of_brownian_motion():
    beta = 2.5
    model = bm_exit(beta=beta)
    grid = Grid1D(-1.0, 1.0, 401)
    T = fk_pde.policy_cost(model, grid, np.zeros(grid.n_nodes), running_extra=0.0)
    # generator 1/(2 beta) d^2/dx^2, so E tau = beta (1 - x^2)
    assert np.max(np.abs(T - beta * (1 - grid.nodes**2))) < 1e-9


def test_zero_cost_gives_zero_value():
    sol = fk_pde.solve_linear_bvp(bm_exit(cost=0.0), Grid1D(-1.0, 1.0, 101))
    assert np.all(sol.psi == 1.0)
    assert np.all(sol.value == 0.0)


def test_ellipticity_and_boundary_checks():
    with pytest.raises(fk_pde.EllipticityError):
        fk_pde.solve_linear_bvp(bm_exit(sigma=0.0), Grid1D(-1.0, 1.0, 11))
    with pytest.raises(ValueError):
        ScalarModel1D(0.0, 1.0, 1.0, 1.0, left="reflecting", right="reflecting")
    with pytest.raises(ValueError):
        ScalarModel1D(0.0, 1.0, 1.0, 1.0, left="periodic")
    with pytest.raises(ValueError):
        Grid1D(0.0, 1.0, 2)


def test_mesh_peclet_warning():
    model = ScalarModel1D(drift=50.0, diffusion=1.0, cost=1.0, beta=1.0, left="absorbing")
    with pytest.warns(fk_pde.MeshPecletWarning):
        fk_pde.solve_linear_bvp(model, Grid1D(0.0, 1.0, 11))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fk_pde.solve_linear_bvp(model, Grid1D(0.0, 1.0, 2001))


@settings(max_examples=40, deadline=None)
@given(
    b=st.floats(-2.0, 2.0),
    a=st.floats(0.3, 3.0),
    g=st.floats(0.0, 3.0),
    beta=st.floats(0.2, 5.0),
)
def test_psi_lies_in_unit_interval(b, a, g, beta):
    model = ScalarModel1D(drift=b, diffusion=a, cost=g, beta=beta, left="reflecting")
    sol = fk_pde.solve_linear_bvp(model, Grid1D(0.0, 1.0, 401))
    assert np.all(sol.psi > 0.0) and np.all(sol.psi <= 1.0)
    assert np.all(sol.value >= 0.0)


@settings(max_examples=25, deadline=None)
@given(g1=st.floats(0.1, 2.0), dg=st.floats(0.0, 2.0))
@example(g1=1.9004753050138596, dg=2.0)  # once left psi(-1) a few ulps below 1
def test_value_monotone_in_cost(g1, dg):
    grid = Grid1D(-1.0, 1.0, 201)
    v1 = fk_pde.solve_linear_bvp(bm_exit(cost=g1), grid).value
    v2 = fk_pde.solve_linear_bvp(bm_exit(cost=g1 + dg), grid).value
    assert np.all(v2 >= v1 - 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.0, 2.0), min_size=4, max_size=4), st.floats(0.5, 3.0))
def test_raising_cost_never_raises_psi(bumps, beta):
    # comparison principle with a random smooth nonnegative perturbation of G
    model = models.overdamped_1d(beta=beta)
    grid = Grid1D(-3.0, 2.0, 501)
    base = fk_pde.solve_linear_bvp(model, grid)

    def bumped(x):
        return 1.0 + sum(b * np.exp(-4 * (x - c) ** 2) for b, c in zip(bumps, (-2.0, -0.5, 0.5, 1.5)))

    higher = fk_pde.solve_linear_bvp(models.overdamped_1d(beta=beta, cost=bumped), grid)
    assert np.all(higher.psi <= base.psi + 1e-12)


@pytest.mark.parametrize("beta", [0.5, 1.0, 3.0])
def test_duality_on_double_well(beta):
    model = models.overdamped_1d(beta=beta)
    grid = Grid1D(-3.0, 2.0, 2001)
    lin = fk_pde.solve_linear_bvp(model, grid)
    pi = fk_pde.solve_hjb_policy_iteration(model, grid)
    scale = float(np.max(np.abs(lin.value)))
    assert np.max(np.abs(lin.value - pi.value)) <= 10 * (1e-10 + grid.h**2 * scale)


def test_csv_round_trip(tmp_path):
    sol = fk_pde.solve_linear_bvp(bm_exit(), Grid1D(-1.0, 1.0, 51))
    sol.to_csv(tmp_path / "v.csv")
    back = fk_pde.BvpSolution.read_csv(tmp_path / "v.csv")
    for name in ("psi", "value", "value_grad", "control"):
        assert np.array_equal(getattr(back, name), getattr(sol, name))
    assert np.array_equal(back.x, sol.x)


def test_evaluate_policy_range_and_feedback_clamp():
    sol = fk_pde.solve_linear_bvp(bm_exit(), Grid1D(-1.0, 1.0, 51))
    with pytest.raises(ValueError):
        fk_pde.evaluate_policy(sol, 1.5)
    assert fk_pde.evaluate_policy(sol, 0.0) == pytest.approx(0.0, abs=1e-12)
    fb = fk_pde.as_feedback(sol)
    u = fb(np.array([[-5.0], [5.0]]), None, 1.0)
    assert u[0, 0] == sol.control[0] and u[1, 0] == sol.control[-1]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-8.0, 4.0), min_size=1, max_size=30))
def test_uniform_interp_agrees_with_numpy(xs):
    grid = Grid1D(-6.0, 1.5, 751)
    table = np.sin(grid.nodes) + grid.nodes**2
    ours = fk_pde.uniform_interp(np.array(xs), grid.x_min, grid.h, table)
    ref = np.interp(xs, grid.nodes, table)
    assert np.allclose(ours, ref, rtol=0, atol=1e-12)
