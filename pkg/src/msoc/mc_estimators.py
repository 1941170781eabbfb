"""Monte-Carlo estimators on top of :mod:`msoc.sde_engine`.

* :func:`estimate_psi` -- ``E exp(-beta int_0^tau G)`` under zero control.
* :func:`estimate_cost` -- ``J(u) = E int_0^tau (G + |u|^2/2)`` under ``u``.
* :func:`estimate_kl` -- ``I(mu_u | mu_hat) = beta/2 E_u int_0^tau |u - u_hat|^2``.

The KL estimator integrates the closed form along paths sampled under ``u``
rather than averaging the raw Girsanov log-weight; both have the same
expectation and the closed form has far smaller variance.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .sde_engine import FeedbackPolicy, ModelSpec, offset_policy, run_ensemble


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_traj: int
    truncated_fraction: float
    # Upper bound on |bias| from truncated paths, when one is known.
    truncation_bias_bound: float = 0.0

    @classmethod
    def from_samples(cls, samples, truncated=None, bias_bound=0.0) -> "McEstimate":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        mean = float(np.mean(samples))
        se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        frac = float(np.mean(truncated)) if truncated is not None and n else 0.0
        return cls(mean, se, n, frac, float(bias_bound))

    def to_record(self, seed=None, dt=None, t_max=None) -> dict:
        rec = asdict(self)
        rec.update(seed=seed, dt=dt, t_max=t_max)
        return rec

    def to_json(self, seed=None, dt=None, t_max=None) -> str:
        return json.dumps(self.to_record(seed, dt, t_max), sort_keys=True)


def estimate_psi(model: ModelSpec, z0, dt, t_max, n_traj, seed, weight_floor: float = 0.0) -> McEstimate:
    """Feynman-Kac estimate of ``psi(z0)`` from an uncontrolled ensemble.

    Truncated paths (time cap or ``weight_floor``) keep their accumulated
    weight; the bias this causes is at most the truncated fraction times
    the largest weight among them, reported as ``truncation_bias_bound``.
    """
    ens = run_ensemble(model, FeedbackPolicy.zero(model.control_dim), z0, dt, t_max, n_traj, seed,
                       weight_floor=weight_floor)
    w = ens.exp_weight
    trunc = ens.truncated
    bound = float(np.sum(w[trunc]) / w.size) if np.any(trunc) else 0.0
    return McEstimate.from_samples(w, trunc, bound)


def value_from_psi(est: McEstimate, beta: float):
    """``(-log(mean)/beta, delta-method standard error)``."""
    v = -math.log(est.mean) / beta
    return v, est.std_error / (beta * est.mean)


def estimate_cost(model: ModelSpec, policy: FeedbackPolicy, z0, dt, t_max, n_traj, seed) -> McEstimate:
    ens = run_ensemble(model, policy, z0, dt, t_max, n_traj, seed)
    return McEstimate.from_samples(ens.path_cost, ens.truncated)


def estimate_exit_time(model: ModelSpec, policy: FeedbackPolicy, z0, dt, t_max, n_traj, seed) -> McEstimate:
    ens = run_ensemble(model, policy, z0, dt, t_max, n_traj, seed)
    return McEstimate.from_samples(ens.stop_time, ens.truncated)


def estimate_kl(model: ModelSpec, policy_u: FeedbackPolicy, policy_hat: FeedbackPolicy, z0, dt, t_max,
                n_traj, seed) -> McEstimate:
    """``beta/2 * int |u - u_hat|^2 ds`` averaged over paths driven by ``policy_u``."""
    ens = run_ensemble(model, policy_u, z0, dt, t_max, n_traj, seed, reference_policy=policy_hat)
    return McEstimate.from_samples(ens.kl_integral, ens.truncated)


@dataclass(frozen=True)
class GapRow:
    delta: float
    gap: float
    gap_se: float
    kl_over_beta: float
    kl_over_beta_se: float
    identity_se: float
    truncated_fraction: float
    error: Optional[str] = None

    @property
    def identity_z(self) -> float:
        """``|gap - KL/beta|`` in units of the combined standard error."""
        if self.identity_se == 0.0:
            return 0.0 if self.gap == self.kl_over_beta else math.inf
        return abs(self.gap - self.kl_over_beta) / self.identity_se


@dataclass
class GapStudy:
    rows: list
    slope: float

    def table(self):
        return [asdict(r) for r in self.rows]


def _fit_slope(x, y):
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def quadratic_gap_study(model: ModelSpec, policy_hat: FeedbackPolicy, delta_list: Sequence[float], z0, dt, t_max,
                        n_traj, seed) -> GapStudy:
    """Cost gap ``J(u_hat + delta) - J(u_hat)`` against ``KL / beta`` for constant offsets.

    Every run uses the same seed, so trajectory ``i`` sees the same noise
    under each policy and the gap is estimated from paired differences.
    The standard error of ``gap - KL/beta`` is taken from the paired
    per-path differences as well.  The slope of ``log gap`` against
    ``log delta`` is fitted over the rows with positive ``delta`` and gap.
    """
    base = run_ensemble(model, policy_hat, z0, dt, t_max, n_traj, seed)
    rows = []
    for delta in delta_list:
        delta = float(delta)
        try:
            if delta == 0.0:
                rows.append(GapRow(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, base.truncated_fraction))
                continue
            pol = offset_policy(policy_hat, [delta] * model.control_dim)
            ens = run_ensemble(model, pol, z0, dt, t_max, n_traj, seed, reference_policy=policy_hat)
            d = ens.path_cost - base.path_cost
            k = ens.kl_integral / model.beta
            n = d.size
            rows.append(GapRow(
                delta,
                float(np.mean(d)),
                float(np.std(d, ddof=1) / math.sqrt(n)),
                float(np.mean(k)),
                float(np.std(k, ddof=1) / math.sqrt(n)),
                float(np.std(d - k, ddof=1) / math.sqrt(n)),
                float(np.mean(ens.truncated | base.truncated)),
            ))
        except (FloatingPointError, ValueError) as exc:
            rows.append(GapRow(delta, math.nan, math.nan, math.nan, math.nan, math.nan, math.nan, str(exc)))
    good = [r for r in rows if r.error is None and r.delta > 0 and r.gap > 0]
    slope = _fit_slope([r.delta for r in good], [r.gap for r in good]) if len(good) >= 2 else math.nan
    return GapStudy(rows, slope)
