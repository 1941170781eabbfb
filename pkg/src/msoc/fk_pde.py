"""One-dimensional boundary value problems for the value function.

The value function ``V`` of a problem with dynamics
``dx = (b + sigma u) dt + sigma beta^{-1/2} dW`` and running cost
``G + |u|^2/2`` is recovered from the linear problem

    (a / (2 beta)) psi'' + b psi' - beta G psi = 0,   psi = 1 on absorbing ends,

with ``a = sigma**2``, via ``V = -log(psi) / beta``.  :func:`solve_hjb_policy_iteration`
solves the nonlinear HJB equation directly and serves as an independent
cross-check of that identity.

Both solvers use second-order central differences on a uniform grid and a
banded direct solve.  Reflecting ends impose a zero derivative with the
one-sided second-order stencil.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

Field = Union[Callable, float]

ABSORBING = "absorbing"
REFLECTING = "reflecting"


class EllipticityError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


class IterationLimitError(RuntimeError):
    def __init__(self, n_iter, residual):
        self.n_iter = n_iter
        self.residual = residual
        super().__init__(f"policy iteration did not converge in {n_iter} iterations (last change {residual:.3e})")


class MeshPecletWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_nodes: int

    def __post_init__(self):
        if self.n_nodes < 3:
            raise ValueError("a grid needs at least 3 nodes")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n_nodes - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_nodes)

    @classmethod
    def with_spacing(cls, x_min, x_max, h_max):
        return cls(x_min, x_max, int(math.ceil((x_max - x_min) / h_max)) + 1)


def _eval(f: Field, x):
    if callable(f):
        return np.broadcast_to(np.asarray(f(x), dtype=float), x.shape).copy()
    return np.full(x.shape, float(f))


@dataclass(frozen=True)
class ScalarModel1D:
    """Scalar controlled diffusion for grid solves.

    ``diffusion`` is ``a = sigma**2``: the generator is
    ``a/(2 beta) d^2/dx^2 + drift d/dx`` and the optimal feedback is
    ``-sqrt(a) V'``.
    """

    drift: Field
    diffusion: Field
    cost: Field
    beta: float
    left: str = REFLECTING
    right: str = ABSORBING
    min_diffusion: float = 1e-10

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        for end in (self.left, self.right):
            if end not in (ABSORBING, REFLECTING):
                raise ValueError(f"unknown boundary tag {end!r}")
        if ABSORBING not in (self.left, self.right):
            raise ValueError("at least one endpoint must be absorbing")

    def coefficients(self, x):
        b = _eval(self.drift, x)
        a = _eval(self.diffusion, x)
        g = _eval(self.cost, x)
        if np.any(a < self.min_diffusion):
            i = int(np.argmin(a))
            raise EllipticityError(f"diffusion {a[i]:.3e} below {self.min_diffusion:.1e} at x = {x[i]:.6g}")
        return b, a, g


@dataclass
class BvpSolution:
    grid: Grid1D
    psi: np.ndarray
    value: np.ndarray
    value_grad: np.ndarray
    control: np.ndarray
    n_iter: int = 0

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "psi", "value", "value_grad", "control"])
            for row in zip(self.x, self.psi, self.value, self.value_grad, self.control):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path) -> "BvpSolution":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        x = data[:, 0]
        grid = Grid1D(float(x[0]), float(x[-1]), x.size)
        return cls(grid, data[:, 1], data[:, 2], data[:, 3], data[:, 4])


def _check_peclet(b, a, beta, h):
    pe = np.abs(b) * h / (a / beta)
    if np.max(pe) > 2.0:
        warnings.warn(
            f"mesh Peclet number {np.max(pe):.2f} exceeds 2; central differences may oscillate",
            MeshPecletWarning,
            stacklevel=3,
        )


def _solve_tridiagonal(lower, diag, upper, rhs, left, right, h, fixed_value):
    """Solve with Dirichlet/Neumann rows; ``lower[i]`` multiplies ``u[i-1]``."""
    n = diag.size
    lo, d, up, r = lower.copy(), diag.copy(), upper.copy(), rhs.copy()
    if left == ABSORBING:
        d[0], up[0], r[0] = 1.0, 0.0, fixed_value
    else:
        # -3u0 + 4u1 - u2 = 0, combined with row 1 to cancel u2
        d[0] = -3.0 * up[1] + lo[1]
        up[0] = 4.0 * up[1] + d[1]
        r[0] = r[1]
    if right == ABSORBING:
        d[-1], lo[-1], r[-1] = 1.0, 0.0, fixed_value
    else:
        d[-1] = -3.0 * lo[-2] + up[-2]
        lo[-1] = 4.0 * lo[-2] + d[-2]
        r[-1] = r[-2]
    ab = np.zeros((3, n))
    ab[0, 1:] = up[:-1]
    ab[1] = d
    ab[2, :-1] = lo[1:]
    try:
        sol = solve_banded((1, 1), ab, r)
    except (LinAlgError, ValueError) as exc:
        raise SolverError(f"tridiagonal solve failed: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise SolverError("tridiagonal solve returned non-finite values (singular system)")
    # pivoting can leave the Dirichlet rows off by a few ulps
    if left == ABSORBING:
        sol[0] = fixed_value
    if right == ABSORBING:
        sol[-1] = fixed_value
    return sol


def _finish(grid, model, psi, a, n_iter=0, value=None):
    if value is None:
        value = -np.log(psi) / model.beta
    grad = np.gradient(value, grid.h, edge_order=2)
    control = -np.sqrt(a) * grad
    return BvpSolution(grid, psi, value, grad, control, n_iter)


def solve_linear_bvp(model: ScalarModel1D, grid: Grid1D) -> BvpSolution:
    """Solve ``(L - beta G) psi = 0`` with ``psi = 1`` at absorbing ends."""
    x = grid.nodes
    h = grid.h
    b, a, g = model.coefficients(x)
    _check_peclet(b, a, model.beta, h)
    diff = a / (2.0 * model.beta) / h**2
    adv = b / (2.0 * h)
    lower = diff - adv
    upper = diff + adv
    diag = -2.0 * diff - model.beta * g
    psi = _solve_tridiagonal(lower, diag, upper, np.zeros_like(x), model.left, model.right, h, 1.0)
    lo, hi = float(np.min(psi)), float(np.max(psi))
    if lo <= 0.0 or hi > 1.0 + 1e-9:
        raise SolverError(f"maximum principle violated: psi in [{lo:.3e}, {hi:.3e}]")
    psi = np.minimum(psi, 1.0)
    return _finish(grid, model, psi, a)


def solve_hjb_policy_iteration(model: ScalarModel1D, grid: Grid1D, tol: float = 1e-10,
                               max_iter: int = 100) -> BvpSolution:
    """Policy iteration on ``min_c {L(c) V + G + |c|^2/2} = 0``, ``V = 0`` at absorbing ends.

    Each sweep solves the linear equation for the current feedback ``c`` and
    then sets ``c = -sqrt(a) V'``.  Stops when successive iterates differ by
    less than ``tol`` in the max norm.
    """
    x = grid.nodes
    h = grid.h
    b, a, g = model.coefficients(x)
    sigma = np.sqrt(a)
    diff = a / (2.0 * model.beta) / h**2
    c = np.zeros_like(x)
    value = np.zeros_like(x)
    change = math.inf
    for it in range(1, max_iter + 1):
        adv = (b + sigma * c) / (2.0 * h)
        new = _solve_tridiagonal(diff - adv, -2.0 * diff, diff + adv, -(g + 0.5 * c * c),
                                 model.left, model.right, h, 0.0)
        change = float(np.max(np.abs(new - value)))
        value = new
        c = -sigma * np.gradient(value, h, edge_order=2)
        if change < tol:
            return _finish(grid, model, np.exp(-model.beta * value), a, it, value)
    raise IterationLimitError(max_iter, change)


def policy_cost(model: ScalarModel1D, grid: Grid1D, control, running_extra: float = 0.5) -> np.ndarray:
    """Expected cost-to-go of a fixed feedback ``c`` on the nodes.

    Solves ``L(c) J + G + running_extra * c^2 = 0`` with ``J = 0`` at absorbing
    ends.  ``control`` is a callable of ``x`` or an array of nodal values.
    With ``model.cost = 1`` and ``running_extra = 0`` this is the mean exit time.
    """
    x = grid.nodes
    h = grid.h
    b, a, g = model.coefficients(x)
    c = _eval(control, x) if callable(control) else np.asarray(control, dtype=float)
    if c.shape != x.shape:
        raise ValueError("control must have one value per grid node")
    diff = a / (2.0 * model.beta) / h**2
    adv = (b + np.sqrt(a) * c) / (2.0 * h)
    return _solve_tridiagonal(diff - adv, -2.0 * diff, diff + adv, -(g + running_extra * c * c),
                              model.left, model.right, h, 0.0)


def evaluate_policy(sol: BvpSolution, x):
    """Linear interpolation of the nodal feedback; raises outside the grid."""
    xa = np.asarray(x, dtype=float)
    g = sol.grid
    if np.any(xa < g.x_min) or np.any(xa > g.x_max):
        raise ValueError(f"x outside grid range [{g.x_min}, {g.x_max}]")
    out = np.interp(xa, sol.x, sol.control)
    return float(out) if out.ndim == 0 else out


def evaluate_value(sol: BvpSolution, x):
    xa = np.asarray(x, dtype=float)
    out = np.interp(xa, sol.x, sol.value)
    return float(out) if out.ndim == 0 else out


def uniform_interp(x, x_min: float, h: float, table: np.ndarray):
    """Piecewise-linear interpolation on uniform nodes, clamped at both ends.

    Agrees with ``np.interp`` up to rounding but locates the cell by
    arithmetic instead of a search, which matters inside time-stepping loops.
    """
    n = table.size
    s = np.clip((np.asarray(x, dtype=float) - x_min) / h, 0.0, n - 1.0)
    i = np.minimum(s.astype(np.intp), n - 2)
    w = s - i
    return table[i] * (1.0 - w) + table[i + 1] * w


def as_feedback(sol: BvpSolution, label: str = "homogenized"):
    """Wrap a grid solution as a :class:`~msoc.sde_engine.FeedbackPolicy`.

    Points outside the grid take the nearest endpoint value, since sampled
    paths may wander past a truncated (reflecting) edge.
    """
    from .sde_engine import FeedbackPolicy

    x_min, h, cs = sol.grid.x_min, sol.grid.h, np.array(sol.control, dtype=float)

    def control(x, y, eps):
        return uniform_interp(x[:, 0], x_min, h, cs)[:, None]

    return FeedbackPolicy(control, label)
