"""Homogenized coefficients for the Langevin and periodic-potential examples.

For a 1-periodic perturbation ``p`` at inverse temperature ``beta`` the cell
problem ``-p' Theta' + Theta''/beta = p'`` has the closed-form solution

    1 + Theta'(y) = exp(beta p(y)) / int_0^1 exp(beta p),

and the effective diffusivity is ``K = 1 / (int e^{-beta p} * int e^{beta p})``.
Periodic integrals use the trapezoidal rule, which is spectrally accurate for
smooth periodic integrands.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fk_pde import ScalarModel1D, uniform_interp
from .sde_engine import FeedbackPolicy, ModelSpec

TABLE_NODES = 1024


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class PeriodicPotential:
    p: Callable
    p_prime: Callable
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    def nodes(self, n):
        return np.arange(n) / n


def _periodic_means(pot: PeriodicPotential, n_quad: int):
    if n_quad < 16:
        raise ValueError("n_quad must be at least 16")
    y = pot.nodes(n_quad)
    p = np.asarray(pot.p(y), dtype=float) * np.ones_like(y)
    if not np.all(np.isfinite(p)):
        raise FloatingPointError("potential is not finite on the quadrature nodes")
    with np.errstate(over="ignore"):
        plus = np.exp(pot.beta * p)
        minus = np.exp(-pot.beta * p)
    if not (np.all(np.isfinite(plus)) and np.all(np.isfinite(minus))):
        raise FloatingPointError("exp(+-beta p) overflows on the quadrature nodes")
    return math.fsum(plus) / n_quad, math.fsum(minus) / n_quad


def effective_diffusivity(pot: PeriodicPotential, n_quad: int = 256) -> float:
    """``K = 1 / (int_0^1 e^{-beta p} dy * int_0^1 e^{beta p} dy)``."""
    z_plus, z_minus = _periodic_means(pot, n_quad)
    return 1.0 / (z_plus * z_minus)


@dataclass
class HomogenizedCoeffs:
    """Cell-problem data tabulated on a uniform periodic grid in ``y``."""

    K: float
    z_plus: float
    z_minus: float
    y: np.ndarray
    theta_prime_table: np.ndarray
    factor_table: np.ndarray
    density_table: np.ndarray
    pot: PeriodicPotential

    def __post_init__(self):
        self._factor_closed = np.append(self.factor_table, self.factor_table[0])

    def _interp(self, table, y):
        yy = np.mod(np.asarray(y, dtype=float), 1.0)
        closed = self._factor_closed if table is self.factor_table else np.append(table, table[0])
        return uniform_interp(yy, 0.0, 1.0 / self.y.size, closed)

    def theta_prime(self, y):
        """Exact ``Theta'(y) = e^{beta p(y)} / int e^{beta p} - 1``."""
        return np.exp(self.pot.beta * self.pot.p(np.asarray(y, dtype=float))) / self.z_plus - 1.0

    def correction_factor(self, y):
        """``e^{beta p(y)} / (sqrt(K) int e^{beta p})``, interpolated from the table."""
        return self._interp(self.factor_table, y)

    def density(self, y):
        return self._interp(self.density_table, y)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["y", "theta_prime", "correction_factor"])
            for row in zip(self.y, self.theta_prime_table, self.factor_table):
                w.writerow([repr(float(v)) for v in row])


def cell_solution(pot: PeriodicPotential, n_quad: int = 256, n_table: int = TABLE_NODES) -> HomogenizedCoeffs:
    z_plus, z_minus = _periodic_means(pot, n_quad)
    K = 1.0 / (z_plus * z_minus)
    y = pot.nodes(n_table)
    p = np.asarray(pot.p(y), dtype=float) * np.ones_like(y)
    e_plus = np.exp(pot.beta * p)
    theta_prime = e_plus / z_plus - 1.0
    factor = e_plus / (math.sqrt(K) * z_plus)
    rho = np.exp(-pot.beta * p) / z_minus
    return HomogenizedCoeffs(K, z_plus, z_minus, y, theta_prime, factor, rho, pot)


def cell_residual(coeffs: HomogenizedCoeffs) -> np.ndarray:
    """``L0 Theta - p'`` on the table nodes, ``Theta''`` by spectral differentiation."""
    tp = coeffs.theta_prime_table
    n = tp.size
    k = np.fft.rfftfreq(n, d=1.0 / n)
    tpp = np.fft.irfft(2j * np.pi * k * np.fft.rfft(tp), n)
    pp = coeffs.pot.p_prime(coeffs.y)
    return -pp * tp + tpp / coeffs.pot.beta - pp


def corrected_control(coeffs: HomogenizedCoeffs, homog_policy: FeedbackPolicy, epsilon: float) -> FeedbackPolicy:
    """Multiply the homogenized feedback by ``correction_factor(x/eps mod 1)``."""

    def control(x, y, eps):
        c = homog_policy.control(x, y, eps)
        return coeffs.correction_factor(x[:, 0] / epsilon)[:, None] * c

    return FeedbackPolicy(control, "corrected")


def overdamped_limit(full_langevin: ModelSpec, left="reflecting", right="absorbing") -> ScalarModel1D:
    """Reduced model of a Langevin system: drift ``-grad Phi``, ``a = 2``.

    The cell problem ``L0 Theta = -y`` has solution ``Theta = y``, so the
    reduced feedback is ``-sqrt(2) V0'``, i.e. the ``control`` field of the
    grid solution of the returned model.
    """
    meta = full_langevin.meta
    if meta.get("kind") != "langevin" or full_langevin.n_slow != 1 or full_langevin.n_fast != 1:
        raise ShapeError("model is not a one-dimensional Langevin system built by msoc.models.langevin")
    eps = full_langevin.epsilon
    probe_x = np.array([[0.3]])
    probe_y = np.array([[0.7]])
    if not np.allclose(full_langevin.slow_drift(probe_x, probe_y, eps), probe_y / eps):
        raise ShapeError("slow drift is not y/eps")

    def drift(x):
        # fast drift at y = 0 is -grad(x)/eps
        xx = np.asarray(x, dtype=float).reshape(-1, 1)
        return (eps * full_langevin.fast_drift(xx, np.zeros_like(xx), eps)).reshape(np.shape(x))

    def cost(x):
        xx = np.asarray(x, dtype=float).reshape(-1, 1)
        return np.asarray(full_langevin.running_cost(xx, np.zeros_like(xx))).reshape(np.shape(x))

    return ScalarModel1D(drift=drift, diffusion=2.0, cost=cost, beta=full_langevin.beta, left=left, right=right)
