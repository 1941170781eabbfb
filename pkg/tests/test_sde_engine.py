import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msoc import _rng, models
from msoc.sde_engine import (
    DivergenceError,
    FeedbackPolicy,
    ModelSpec,
    default_dt,
    offset_policy,
    run_ensemble,
    sample_ensemble,
    simulate,
)

ZERO = FeedbackPolicy.zero(1)


def constant_policy(c):
    return offset_policy(ZERO, [c])


# -- random numbers ---------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(seed=st.integers(-(2**70), 2**70), index=st.integers(0, 10**6))
def test_derived_seeds_are_consistent(seed, index):
    seeds = _rng.derive_seeds(seed, index + 1)
    assert int(seeds[index]) == _rng.derive_seed(seed, index)


def test_normals_statistics_and_determinism():
    keys = _rng.trajectory_keys(_rng.derive_seeds(5, 200000))
    z = _rng.normals(keys, 17, 3)
    assert z.shape == (200000, 3)
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1.0) < 0.01
    assert abs(np.corrcoef(z[:, 0], z[:, 1])[0, 1]) < 0.01
    assert np.array_equal(z, _rng.normals(keys, 17, 3))
    assert not np.array_equal(z, _rng.normals(keys, 18, 3))
    assert np.array_equal(z[:, 0], _rng.normal_column(keys, 17))
    # each variate depends only on its own key
    assert np.array_equal(_rng.normals(keys[5:9], 17, 3), z[5:9])


# -- single trajectories and ensembles --------------------------------------------

def test_determinism_and_batch_independence():
    model = models.langevin(0.3)
    pol = constant_policy(0.2)
    a = run_ensemble(model, pol, [1.0, 0.0], 0.005, 5.0, 64, 11)
    b = run_ensemble(model, pol, [1.0, 0.0], 0.005, 5.0, 64, 11, chunk_size=7)
    for name in ("stop_time", "path_cost", "exp_weight", "girsanov_log_weight", "truncated"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    one = simulate(model, pol, [1.0, 0.0], 0.005, 5.0, _rng.derive_seed(11, 9))
    assert one == a[9]
    assert sample_ensemble(model, pol, [1.0, 0.0], 0.005, 5.0, 64, 11)[3] == a[3]


def test_per_trajectory_start():
    model = models.brownian_exit()
    z0 = np.array([[0.0], [0.5], [0.0], [-0.5]])
    ens = run_ensemble(model, ZERO, z0, 1e-3, 10.0, 4, 3, chunk_size=3)
    assert ens[0] == run_ensemble(model, ZERO, [0.0], 1e-3, 10.0, 1, 3)[0]
    with pytest.raises(ValueError):
        run_ensemble(model, ZERO, z0, 1e-3, 10.0, 5, 3)


def test_truncation_flag():
    model = models.brownian_exit(half_width=10.0)
    ens = run_ensemble(model, ZERO, [0.0], 0.01, 0.5, 50, 1)
    assert ens.truncated.all()
    assert np.allclose(ens.stop_time, 0.5)
    assert np.allclose(ens.path_cost, 0.5)


def test_weight_floor_stops_paths_early():
    model = models.brownian_exit(half_width=10.0)
    ens = run_ensemble(model, ZERO, [0.0], 0.01, 100.0, 20, 1, weight_floor=math.exp(-2.0))
    assert ens.truncated.all()
    assert np.all(ens.stop_time < 2.1)


def test_precondition_errors():
    model = models.brownian_exit()
    with pytest.raises(ValueError):
        simulate(model, ZERO, [1.5], 0.01, 1.0, 0)
    with pytest.raises(ValueError):
        simulate(model, ZERO, [0.0], 0.0, 1.0, 0)
    with pytest.raises(ValueError):
        simulate(model, ZERO, [0.0], 0.1, 0.05, 0)
    with pytest.raises(ValueError):
        ModelSpec(1, 0, 1, 1, lambda x, y, e: x, None, [[1.0]], np.zeros((0, 1)), [[1.0]], np.zeros((0, 1)),
                  epsilon=0.0, beta=1.0, running_cost=models.unit_cost, stop_region=lambda x, y: x[:, 0] > 1)


def test_divergence_is_reported():
    model = ModelSpec(1, 0, 1, 1, lambda x, y, e: x**3, None, [[1.0]], np.zeros((0, 1)), [[1.0]],
                      np.zeros((0, 1)), epsilon=1.0, beta=1.0, running_cost=models.unit_cost,
                      stop_region=lambda x, y: np.zeros(x.shape[0], dtype=bool))
    with pytest.raises(DivergenceError) as info:
        run_ensemble(model, ZERO, [3.0], 0.5, 100.0, 4, 0)
    assert info.value.trajectory is not None


def test_default_dt():
    assert default_dt(0.1) == pytest.approx(1e-3)


# -- weak accuracy against closed forms --------------------------------------------

def test_bm_exit_weight_converges_under_dt_refinement():
    exact = 1.0 / math.cosh(math.sqrt(2.0))
    model = models.brownian_exit()
    errs, ses = [], []
    for dt in (4e-3, 1e-3, 2.5e-4):
        w = run_ensemble(model, ZERO, [0.0], dt, 50.0, 20000, 5).exp_weight
        errs.append(abs(w.mean() - exact))
        ses.append(w.std(ddof=1) / math.sqrt(w.size))
    # grid-time exit detection overestimates tau, so the weight is biased low
    for k in range(2):
        assert errs[k + 1] < errs[k] + 2 * math.hypot(ses[k], ses[k + 1])
    assert errs[-1] < 4 * ses[-1] + 0.01


def test_girsanov_weight_is_a_likelihood_ratio():
    # Under mu_u, E exp(-L) = 1 where L = log dmu_u/dmu, and E L = KL = beta/2 E int u^2
    beta, c = 2.0, 0.6
    model = models.brownian_exit(beta=beta)
    ens = run_ensemble(model, constant_policy(c), [0.0], 1e-3, 50.0, 20000, 8, reference_policy=ZERO)
    lw = ens.girsanov_log_weight
    r = np.exp(-lw)
    assert abs(r.mean() - 1.0) < 4 * r.std(ddof=1) / math.sqrt(r.size)
    diff = lw - ens.kl_integral
    assert abs(diff.mean()) < 4 * diff.std(ddof=1) / math.sqrt(diff.size)
    # the closed-form KL integrand is exact path by path for a constant offset
    assert np.allclose(ens.kl_integral, 0.5 * beta * c * c * ens.stop_time, rtol=1e-12)


def test_path_cost_includes_control_energy():
    model = models.brownian_exit(cost=0.0)
    ens = run_ensemble(model, constant_policy(0.4), [0.0], 1e-3, 20.0, 50, 2)
    assert np.allclose(ens.path_cost, 0.5 * 0.16 * ens.stop_time)
