"""Model builders for the worked examples.

Each builder returns a :class:`~msoc.sde_engine.ModelSpec` (for trajectory
sampling) and, where the problem is one-dimensional, a matching
:class:`~msoc.fk_pde.ScalarModel1D` (for grid solves).
"""

from __future__ import annotations

import math

import numpy as np

from .fk_pde import ScalarModel1D
from .sde_engine import ModelSpec

SQRT2 = math.sqrt(2.0)


def unit_cost(x, y=None):
    return np.ones(np.shape(x)[0])


def zero_cost(x, y=None):
    return np.zeros(np.shape(x)[0])


# -- potentials ---------------------------------------------------------------

def double_well(x):
    return 0.25 * (x**2 - 1.0) ** 2


def double_well_grad(x):
    return x * (x * x - 1.0)


def tilted_double_well(x):
    return (
        -5.0 * (np.exp(-0.2 * (x + 2.5) ** 2) + np.exp(-0.2 * (x - 2.5) ** 2))
        + 0.01 * x**4
        + 0.8 * x
    )


def tilted_double_well_grad(x):
    a = x + 2.5
    b = x - 2.5
    return 2.0 * a * np.exp(-0.2 * (a * a)) + 2.0 * b * np.exp(-0.2 * (b * b)) + 0.04 * (x * x * x) + 0.8


def sine_perturbation(amplitude=0.5):
    """``p(y) = amplitude * sin(2 pi y)`` and its derivative."""

    def p(y):
        return amplitude * np.sin(2.0 * np.pi * y)

    def p_prime(y):
        return 2.0 * np.pi * amplitude * np.cos(2.0 * np.pi * y)

    return p, p_prime


# -- Brownian exit --------------------------------------------------------------

def brownian_exit(half_width=1.0, beta=1.0, cost=1.0, sigma=1.0) -> ModelSpec:
    """``dx = sigma beta^{-1/2} dW`` on ``(-half_width, half_width)``, constant cost."""

    def cost_fn(x, y):
        return np.full(np.shape(x)[0], float(cost))

    return ModelSpec(
        n_slow=1,
        n_fast=0,
        noise_dim=1,
        control_dim=1,
        slow_drift=lambda x, y, eps: np.zeros_like(x),
        fast_drift=None,
        slow_noise=[[sigma]],
        fast_noise=np.zeros((0, 1)),
        control_gain_slow=[[sigma]],
        control_gain_fast=np.zeros((0, 1)),
        epsilon=1.0,
        beta=beta,
        running_cost=cost_fn,
        stop_region=lambda x, y: np.abs(x[:, 0]) >= half_width,
        cost_bound=float(cost),
    )


# -- Langevin -------------------------------------------------------------------

def langevin(epsilon, beta=1.0, grad_potential=double_well_grad, cost=unit_cost, exit_at=2.0) -> ModelSpec:
    """Second-order Langevin dynamics as a slow position / fast velocity pair.

    ``dx = y/eps dt``, ``dy = (sqrt2 u/eps - grad(x)/eps - y/eps^2) dt
    + sqrt2 beta^{-1/2}/eps dW``, stopped when ``x > exit_at``.
    """

    def slow_drift(x, y, eps):
        return y / eps

    def fast_drift(x, y, eps):
        return -grad_potential(x) / eps - y / eps**2

    return ModelSpec(
        n_slow=1,
        n_fast=1,
        noise_dim=1,
        control_dim=1,
        slow_drift=slow_drift,
        fast_drift=fast_drift,
        slow_noise=[[0.0]],
        fast_noise=[[SQRT2]],
        control_gain_slow=[[0.0]],
        control_gain_fast=lambda x, y, eps: np.array([[SQRT2 / eps]]),
        epsilon=epsilon,
        beta=beta,
        running_cost=cost,
        stop_region=lambda x, y: x[:, 0] > exit_at,
        cost_bound=1.0,
        meta={"kind": "langevin", "grad_potential": grad_potential, "exit_at": exit_at},
    )


def overdamped(beta=1.0, grad_potential=double_well_grad, cost=unit_cost, exit_at=2.0, scale=1.0) -> ModelSpec:
    """``dx = (-scale grad(x) + sqrt(2 scale) u) dt + sqrt(2 scale) beta^{-1/2} dW``."""
    s = math.sqrt(2.0 * scale)

    def slow_drift(x, y, eps):
        return -scale * grad_potential(x)

    return ModelSpec(
        n_slow=1,
        n_fast=0,
        noise_dim=1,
        control_dim=1,
        slow_drift=slow_drift,
        fast_drift=None,
        slow_noise=[[s]],
        fast_noise=np.zeros((0, 1)),
        control_gain_slow=[[s]],
        control_gain_fast=np.zeros((0, 1)),
        epsilon=1.0,
        beta=beta,
        running_cost=cost,
        stop_region=lambda x, y: x[:, 0] > exit_at,
        cost_bound=1.0,
    )


def overdamped_1d(beta=1.0, grad_potential=double_well_grad, cost=None, scale=1.0,
                  left="reflecting", right="absorbing") -> ScalarModel1D:
    cost = cost if cost is not None else (lambda x: np.ones_like(x))
    return ScalarModel1D(
        drift=lambda x: -scale * grad_potential(x),
        diffusion=2.0 * scale,
        cost=cost,
        beta=beta,
        left=left,
        right=right,
    )


# -- periodic two-scale potential --------------------------------------------------

def periodic_multiscale(epsilon, beta=2.0, grad_phi0=tilted_double_well_grad, p_prime=None,
                        cost=unit_cost, exit_at=1.5) -> ModelSpec:
    """``dx = (-phi0'(x) - p'(x/eps)/eps + sqrt2 u) dt + sqrt2 beta^{-1/2} dW``.

    The fast variable ``y = x/eps`` is a function of ``x`` and shares its
    noise, so it is not carried as a separate block.  Stopped when
    ``x >= exit_at``.
    """
    if p_prime is None:
        p_prime = sine_perturbation()[1]

    def slow_drift(x, y, eps):
        return -grad_phi0(x) - p_prime(x / eps) / eps

    return ModelSpec(
        n_slow=1,
        n_fast=0,
        noise_dim=1,
        control_dim=1,
        slow_drift=slow_drift,
        fast_drift=None,
        slow_noise=[[SQRT2]],
        fast_noise=np.zeros((0, 1)),
        control_gain_slow=[[SQRT2]],
        control_gain_fast=np.zeros((0, 1)),
        epsilon=epsilon,
        beta=beta,
        running_cost=cost,
        stop_region=lambda x, y: x[:, 0] >= exit_at,
        cost_bound=1.0,
        shared_noise=True,
        meta={"kind": "periodic", "exit_at": exit_at},
    )


def periodic_multiscale_1d(epsilon, beta=2.0, grad_phi0=tilted_double_well_grad, p_prime=None,
                           cost=None) -> ScalarModel1D:
    """Grid form of :func:`periodic_multiscale`, with the two-scale drift resolved."""
    if p_prime is None:
        p_prime = sine_perturbation()[1]
    cost = cost if cost is not None else (lambda x: np.ones_like(x))
    return ScalarModel1D(
        drift=lambda x: -grad_phi0(x) - p_prime(x / epsilon) / epsilon,
        diffusion=2.0,
        cost=cost,
        beta=beta,
        left="reflecting",
        right="absorbing",
    )


def periodic_homogenized_1d(K, beta=2.0, grad_phi0=tilted_double_well_grad, cost=None) -> ScalarModel1D:
    """Homogenized dynamics ``dx = -K phi0' dt + sqrt(2K) (u dt + beta^{-1/2} dW)``."""
    return overdamped_1d(beta=beta, grad_potential=grad_phi0, cost=cost, scale=K)
