"""Controlled slow-fast diffusions and their Euler-Maruyama simulation.

A model has a slow block ``x`` (dimension ``n_slow``) and a fast block ``y``
(dimension ``n_fast``, possibly zero).  With ``dW`` a ``noise_dim``-dimensional
Wiener increment the scheme advances

    x <- x + (slow_drift + G_x u) dt + beta^{-1/2} a_x dW
    y <- y + (fast_drift + G_y u) dt + beta^{-1/2} / eps * a_y dW

until ``stop_region`` fires or ``t_max`` is reached.  All fields are
vectorized over a leading batch axis: ``x`` has shape ``(m, n_slow)`` and
``y`` has shape ``(m, n_fast)``.

Exit detection is on the time grid only (no Brownian-bridge correction), so
exit statistics carry an ``O(sqrt(dt))`` bias when the exiting coordinate is
driven by noise.  For fast blocks scaled by ``eps**-2`` a step of
``dt <= eps**2 / 10`` is a sensible default (see :func:`default_dt`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from . import _rng

__all__ = [
    "ModelSpec",
    "FeedbackPolicy",
    "TrajectoryResult",
    "EnsembleResult",
    "DivergenceError",
    "simulate",
    "sample_ensemble",
    "run_ensemble",
    "default_dt",
]


class DivergenceError(FloatingPointError):
    """A trajectory produced a non-finite state."""

    def __init__(self, step: int, trajectory: Optional[int] = None):
        self.step = step
        self.trajectory = trajectory
        where = f"step {step}"
        if trajectory is not None:
            where = f"trajectory {trajectory}, " + where
        super().__init__(f"non-finite state encountered at {where}")


def _as_field(value) -> Callable:
    if callable(value):
        return value
    arr = np.asarray(value, dtype=float)
    return lambda *args: arr


@dataclass(frozen=True)
class ModelSpec:
    """A controlled slow-fast diffusion on an open set ``O``.

    ``slow_drift(x, y, eps)`` and ``fast_drift(x, y, eps)`` return the full
    drifts, already including their ``1/eps`` and ``1/eps**2`` factors.
    ``slow_noise(x, y)`` and ``fast_noise(x, y)`` return matrices of shape
    ``(n, noise_dim)`` (or batched ``(m, n, noise_dim)``); the engine applies
    ``beta**-0.5`` to the slow one and ``beta**-0.5 / eps`` to the fast one.
    ``control_gain_slow(x, y, eps)`` and ``control_gain_fast(x, y, eps)`` are
    the full matrices multiplying ``u``, so for the usual models the fast gain
    carries its own ``1/eps``.  Constant arrays are accepted for any of the
    noise and gain fields.

    The Girsanov accumulator assumes the control acts through the noise
    matrix (gain equal to the noise matrix, ``control_dim == noise_dim``),
    which holds for every model in :mod:`msoc.models`.
    """

    n_slow: int
    n_fast: int
    noise_dim: int
    control_dim: int
    slow_drift: Callable
    fast_drift: Optional[Callable]
    slow_noise: Any
    fast_noise: Any
    control_gain_slow: Any
    control_gain_fast: Any
    epsilon: float
    beta: float
    running_cost: Callable
    stop_region: Callable
    cost_bound: float = math.inf
    shared_noise: bool = True
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.n_slow < 1 or self.n_fast < 0:
            raise ValueError("need n_slow >= 1 and n_fast >= 0")
        if self.n_fast > 0 and self.fast_drift is None:
            raise ValueError("fast block declared without a fast drift")
        for name in ("slow_noise", "fast_noise", "control_gain_slow", "control_gain_fast"):
            object.__setattr__(self, name, _as_field(getattr(self, name)))

    @property
    def dim(self) -> int:
        return self.n_slow + self.n_fast

    def split(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return z[:, : self.n_slow], z[:, self.n_slow :]

    def stopped(self, z) -> np.ndarray:
        x, y = self.split(z)
        return np.asarray(self.stop_region(x, y), dtype=bool).reshape(-1)


@dataclass(frozen=True)
class FeedbackPolicy:
    """Stationary feedback ``u = control(x, y, eps)``; returns shape ``(m, l)``."""

    control: Callable
    label: str = "custom"

    @classmethod
    def zero(cls, control_dim: int) -> "FeedbackPolicy":
        def control(x, y, eps):
            return np.zeros((np.shape(x)[0], control_dim))

        return cls(control, "zero")

    def __call__(self, x, y, eps):
        return self.control(x, y, eps)


def offset_policy(policy: FeedbackPolicy, delta) -> FeedbackPolicy:
    """``policy`` shifted by a constant vector ``delta``."""
    delta = np.asarray(delta, dtype=float)

    def control(x, y, eps):
        return policy.control(x, y, eps) + delta

    return FeedbackPolicy(control, f"{policy.label}+offset")


@dataclass(frozen=True)
class TrajectoryResult:
    stop_time: float
    path_cost: float
    exp_weight: float
    girsanov_log_weight: float
    truncated: bool
    kl_integral: float = 0.0


@dataclass
class EnsembleResult:
    """Column arrays for an ensemble, in trajectory-index order."""

    stop_time: np.ndarray
    path_cost: np.ndarray
    exp_weight: np.ndarray
    girsanov_log_weight: np.ndarray
    truncated: np.ndarray
    kl_integral: np.ndarray

    def __len__(self):
        return self.stop_time.shape[0]

    def __getitem__(self, i) -> TrajectoryResult:
        return TrajectoryResult(
            float(self.stop_time[i]),
            float(self.path_cost[i]),
            float(self.exp_weight[i]),
            float(self.girsanov_log_weight[i]),
            bool(self.truncated[i]),
            float(self.kl_integral[i]),
        )

    def results(self) -> list:
        return [self[i] for i in range(len(self))]

    @property
    def truncated_fraction(self) -> float:
        return float(np.mean(self.truncated)) if len(self) else 0.0


def default_dt(epsilon: float, factor: float = 0.1) -> float:
    """Step size ``factor * eps**2`` for models with an ``eps**-2`` fast drift."""
    return factor * epsilon**2


def _matvec(mat, vec):
    # Explicit accumulation keeps results independent of the batch size.
    mat = np.asarray(mat, dtype=float)
    out = mat[..., 0] * vec[:, None, 0]
    for j in range(1, vec.shape[1]):
        out = out + mat[..., j] * vec[:, None, j]
    return out


def _n_steps(dt: float, t_max: float) -> int:
    n = int(round(t_max / dt))
    if n * dt < t_max * (1.0 - 1e-12):
        n = int(math.ceil(t_max / dt))
    return max(n, 1)


def _run(model, policy, z0, dt, t_max, keys, index_offset, reference_policy, weight_floor):
    m = keys.shape[0]
    z0 = np.asarray(z0, dtype=float)
    z = np.broadcast_to(z0, (m, model.dim)).copy() if z0.ndim == 1 else z0.copy()
    if z.shape != (m, model.dim):
        raise ValueError(f"initial state has shape {z0.shape}, expected ({model.dim},)")
    if np.any(model.stopped(z)):
        raise ValueError("initial state lies outside O (stop_region is already true)")

    eps, beta = model.epsilon, model.beta
    sq_beta = math.sqrt(beta)
    noise_s = 1.0 / sq_beta
    noise_f = 1.0 / (sq_beta * eps)
    sq_dt = math.sqrt(dt)
    ns = model.n_slow
    n_max = _n_steps(dt, t_max)

    stop_time = np.zeros(m)
    cost = np.zeros(m)
    g_int = np.zeros(m)
    girs = np.zeros(m)
    kl = np.zeros(m)
    truncated = np.zeros(m, dtype=bool)

    alive = np.arange(m)
    a_cost = np.zeros(m)
    a_g = np.zeros(m)
    a_girs = np.zeros(m)
    a_kl = np.zeros(m)
    a_keys = keys
    log_floor = -math.log(weight_floor) / beta if weight_floor > 0 else math.inf

    def retire(mask, t, trunc):
        idx = alive[mask]
        stop_time[idx] = t
        cost[idx] = a_cost[mask]
        g_int[idx] = a_g[mask]
        girs[idx] = a_girs[mask]
        kl[idx] = a_kl[mask]
        truncated[idx] = trunc

    one_noise = model.noise_dim == 1
    check_floor = weight_floor > 0
    for step in range(n_max):
        x, y = z[:, :ns], z[:, ns:]
        u = np.asarray(policy.control(x, y, eps), dtype=float).reshape(alive.size, -1)
        if one_noise:
            dw = _rng.normal_column(a_keys, step)[:, None] * sq_dt
        else:
            dw = _rng.normals(a_keys, step, model.noise_dim) * sq_dt
        g = np.asarray(model.running_cost(x, y), dtype=float).reshape(-1)
        u2 = np.sum(u * u, axis=1)

        a_cost = a_cost + (g + 0.5 * u2) * dt
        a_g = a_g + g * dt
        if u.shape[1] == model.noise_dim:
            a_girs = a_girs + sq_beta * np.sum(u * dw, axis=1) + 0.5 * beta * u2 * dt
        if reference_policy is not None:
            du = u - np.asarray(reference_policy.control(x, y, eps), dtype=float).reshape(u.shape)
            a_kl = a_kl + 0.5 * beta * np.sum(du * du, axis=1) * dt

        dx = model.slow_drift(x, y, eps) + _matvec(model.control_gain_slow(x, y, eps), u)
        x_new = x + dx * dt + noise_s * _matvec(model.slow_noise(x, y), dw)
        if model.n_fast:
            dy = model.fast_drift(x, y, eps) + _matvec(model.control_gain_fast(x, y, eps), u)
            y_new = y + dy * dt + noise_f * _matvec(model.fast_noise(x, y), dw)
            z = np.concatenate([x_new, y_new], axis=1)
        else:
            y_new = y
            z = x_new

        if not np.isfinite(z).all():
            bad = ~np.all(np.isfinite(z), axis=1)
            raise DivergenceError(step, int(alive[np.argmax(bad)]) + index_offset)

        t = (step + 1) * dt
        done = np.asarray(model.stop_region(x_new, y_new), dtype=bool).reshape(-1)
        if check_floor:
            floored = (a_g > log_floor) & ~done
            if floored.any():
                retire(floored, t, True)
            done_any = done.any()
            if done_any:
                retire(done, t, False)
            keep = ~(done | floored)
            changed = done_any or floored.any()
        else:
            changed = done.any()
            if changed:
                retire(done, t, False)
                keep = ~done
        if changed:
            alive, z, a_keys = alive[keep], z[keep], a_keys[keep]
            a_cost, a_g, a_girs, a_kl = a_cost[keep], a_g[keep], a_girs[keep], a_kl[keep]
            if alive.size == 0:
                break

    if alive.size:
        retire(np.ones(alive.size, dtype=bool), n_max * dt, True)

    return EnsembleResult(stop_time, cost, np.exp(-beta * g_int), girs, truncated, kl)


def simulate(
    model: ModelSpec,
    policy: FeedbackPolicy,
    z0,
    dt: float,
    t_max: float,
    rng_seed: int,
    reference_policy: Optional[FeedbackPolicy] = None,
    weight_floor: float = 0.0,
) -> TrajectoryResult:
    """Simulate one trajectory until first exit from ``O`` or ``t_max``.

    Accumulators use left-endpoint (Ito) quadrature.  If ``reference_policy``
    is given, ``kl_integral`` holds ``beta/2 * int |u - u_ref|^2 ds``.  A
    positive ``weight_floor`` stops the path early (flagged as truncated)
    once ``exp_weight`` falls below it.
    """
    _check_times(dt, t_max)
    keys = _rng.trajectory_keys([rng_seed])
    return _run(model, policy, z0, dt, t_max, keys, 0, reference_policy, weight_floor)[0]


def run_ensemble(
    model: ModelSpec,
    policy: FeedbackPolicy,
    z0,
    dt: float,
    t_max: float,
    n_traj: int,
    base_seed: int,
    reference_policy: Optional[FeedbackPolicy] = None,
    weight_floor: float = 0.0,
    chunk_size: int = 20000,
) -> EnsembleResult:
    """Vectorized ensemble; trajectory ``i`` uses ``derive_seed(base_seed, i)``.

    ``z0`` is either one state, shared by every trajectory, or an array of
    shape ``(n_traj, dim)`` giving each trajectory its own start.
    """
    _check_times(dt, t_max)
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    z0 = np.asarray(z0, dtype=float)
    if z0.ndim == 2 and z0.shape[0] != n_traj:
        raise ValueError(f"per-trajectory z0 has {z0.shape[0]} rows, expected {n_traj}")
    seeds = _rng.derive_seeds(base_seed, n_traj)
    parts = []
    for start in range(0, n_traj, chunk_size):
        keys = _rng.trajectory_keys(seeds[start : start + chunk_size])
        z_part = z0[start : start + chunk_size] if z0.ndim == 2 else z0
        parts.append(_run(model, policy, z_part, dt, t_max, keys, start, reference_policy, weight_floor))
    if len(parts) == 1:
        return parts[0]
    return EnsembleResult(
        *(np.concatenate([getattr(p, f) for p in parts]) for f in (
            "stop_time", "path_cost", "exp_weight", "girsanov_log_weight", "truncated", "kl_integral"
        ))
    )


def sample_ensemble(model, policy, z0, dt, t_max, n_traj, base_seed, **kwargs) -> list:
    """List of :class:`TrajectoryResult`, one per trajectory, in index order."""
    return run_ensemble(model, policy, z0, dt, t_max, n_traj, base_seed, **kwargs).results()


def _check_times(dt, t_max):
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not t_max >= dt:
        raise ValueError(f"t_max ({t_max}) must be at least dt ({dt})")
