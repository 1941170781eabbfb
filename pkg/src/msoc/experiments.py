"""Configuration-driven experiment drivers.

Each ``run_*`` function takes an :class:`ExperimentConfig`, writes CSV tables
into ``cfg.out_dir`` and returns a :class:`RunResult`.  :func:`run` wraps a
driver with manifest emission.  Per-epsilon failures are recorded in the
tables and in ``RunResult.errors`` instead of aborting the run, so partial
results are always flushed.

Column names carry their provenance: ``_grid`` for finite-difference
solves, ``_mc`` for Monte-Carlo means and ``_se`` for their standard errors.
All quantities are in the nondimensional units of the models.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import json
import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import _rng, fk_pde, homogenize, lqr, mc_estimators, models
from .sde_engine import FeedbackPolicy, run_ensemble

__all__ = [
    "EXPERIMENTS",
    "ConfigError",
    "ExperimentConfig",
    "RunResult",
    "default_config",
    "load_config",
    "run",
    "run_langevin_dw",
    "run_periodic_msp",
    "run_l2_convergence",
    "run_lqr_sweep",
    "run_entropy_gap",
    "threads_from_env",
]

CONFIG_FORMAT = 1
MANIFEST_FORMAT = "msoc-manifest v1"
EXPERIMENTS = ("langevin_dw", "periodic_msp", "l2_convergence", "lqr_sweep", "entropy_gap")


class ConfigError(ValueError):
    pass


# running costs selectable by name; G = 0 is the degenerate check case
_COSTS = {"unit": lambda x: np.ones_like(x), "zero": lambda x: np.zeros_like(x)}


@dataclass(frozen=True)
class ExperimentConfig:
    """All parameters of one experiment run.

    ``dt_factor`` sets ``dt = dt_factor * eps**2`` for epsilon sweeps; the
    entropy study, which has no epsilon, uses ``dt`` directly.  Multiscale
    grids are sized by ``nodes_per_period`` (nodes per period ``eps`` of the
    fast potential); epsilon-free grids use ``n_nodes``.  ``x_max`` is both
    the absorbing grid end and the exit threshold of the sampled paths;
    ``x_min`` is a reflecting truncation.
    """

    experiment: str
    epsilon_list: tuple = ()
    beta: float = 1.0
    x_min: float = -3.0
    x_max: float = 2.0
    n_nodes: int = 2001
    nodes_per_period: int = 800
    dt: float = 1e-3
    dt_factor: float = 0.1
    t_max: float = 30.0
    n_traj: int = 10000
    seed: int = 20240101
    x0_list: tuple = ()
    amplitude: float = 0.5
    weight_floor: float = 1e-12
    delta_list: tuple = ()
    fixture: str = "synthetic"
    cost: str = "unit"
    tol: float = 1e-10
    out_dir: str = "out"

    def __post_init__(self):
        for name in ("epsilon_list", "x0_list", "delta_list"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {', '.join(EXPERIMENTS)}")
        checks = [
            (self.beta > 0, "beta must be positive"),
            (self.x_max > self.x_min, "x_max must exceed x_min"),
            (self.n_nodes >= 3, "n_nodes must be at least 3"),
            (self.nodes_per_period >= 4, "nodes_per_period must be at least 4"),
            (self.dt > 0 and self.dt_factor > 0, "dt and dt_factor must be positive"),
            (self.t_max > 0, "t_max must be positive"),
            (self.n_traj >= 2, "n_traj must be at least 2"),
            (0.0 <= self.weight_floor < 1.0, "weight_floor must lie in [0, 1)"),
            (self.tol > 0, "tol must be positive"),
            (self.cost in _COSTS, f"cost must be one of {', '.join(_COSTS)}"),
            (all(e > 0 for e in self.epsilon_list), "epsilon values must be positive"),
            (all(math.isfinite(v) for v in self.x0_list + self.delta_list), "x0 and delta values must be finite"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(f"[{self.experiment}] {msg}")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for name in ("epsilon_list", "x0_list", "delta_list"):
            d[name] = list(d[name])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_ini(self) -> str:
        lines = ["[msoc]", f"format = {CONFIG_FORMAT}", "", f"[{self.experiment}]"]
        for f in dataclasses.fields(self):
            if f.name == "experiment":
                continue
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                text = ", ".join(repr(x) for x in v)
            else:
                text = repr(v) if isinstance(v, float) else str(v)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _parse_value(name, text):
    kind = _FIELD_TYPES[name]
    text = text.strip()
    try:
        if kind == "tuple":
            return tuple(float(t) for t in text.replace(",", " ").split())
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse {name} = {text!r} as {kind}") from None
    return text


_DEFAULTS = {
    "langevin_dw": dict(
        epsilon_list=(0.5, 0.35, 0.25, 0.15, 0.1), beta=1.0, x_min=-3.0, x_max=2.0, n_nodes=2001,
        dt_factor=0.1, t_max=30.0, n_traj=10000, x0_list=(1.0, 1.2, 1.5), weight_floor=1e-12,
    ),
    "periodic_msp": dict(
        epsilon_list=(0.1, 0.05), beta=2.0, x_min=-6.0, x_max=1.5, nodes_per_period=800,
        dt_factor=0.000625, t_max=100.0, n_traj=2000, x0_list=(-2.5, -1.0, 0.0, 0.5, 1.0), amplitude=0.5,
    ),
    "l2_convergence": dict(
        epsilon_list=(0.1, 0.05, 0.025), beta=2.0, x_min=-6.0, x_max=1.5, nodes_per_period=1600,
        amplitude=0.5,
    ),
    "lqr_sweep": dict(epsilon_list=(0.2, 0.1, 0.05, 0.025), beta=0.01, fixture="synthetic", tol=1e-10),
    "entropy_gap": dict(
        beta=1.0, x_min=-3.0, x_max=2.0, n_nodes=2001, dt=1e-3, t_max=50.0, n_traj=2_000_000, x0_list=(-1.0,),
        delta_list=(0.05, 0.1, 0.2, 0.4),
    ),
}


def default_config(experiment: str, **overrides) -> ExperimentConfig:
    if experiment not in _DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    d = dict(_DEFAULTS[experiment])
    d.update(overrides)
    return ExperimentConfig(experiment=experiment, **d)


def load_config(path, experiment: str) -> ExperimentConfig:
    """Read ``[experiment]`` from an INI file, or the config echoed in a manifest.

    Keys absent from the file keep their built-in defaults.
    """
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        data = json.loads(text)
        cfg = data.get("config", data)
        if cfg.get("experiment") != experiment:
            raise ConfigError(f"{path} holds a {cfg.get('experiment')!r} config, not {experiment!r}")
        return ExperimentConfig.from_dict(cfg)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if parser.has_section("msoc"):
        fmt = parser.get("msoc", "format", fallback=str(CONFIG_FORMAT))
        if fmt.strip() != str(CONFIG_FORMAT):
            raise ConfigError(f"{path}: unsupported config format {fmt!r}")
    if not parser.has_section(experiment):
        raise ConfigError(f"{path} has no [{experiment}] section")
    overrides = {}
    for key, value in parser.items(experiment):
        if key not in _FIELD_TYPES or key == "experiment":
            raise ConfigError(f"{path}: unknown key {key!r} in [{experiment}]")
        overrides[key] = _parse_value(key, value)
    return default_config(experiment, **overrides)


@dataclass
class RunResult:
    files: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)


def threads_from_env() -> int:
    raw = os.environ.get("MSOC_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MSOC_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def _map(fn: Callable, items, threads: int):
    """Ordered map; results do not depend on the thread count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _eps_seed(cfg: ExperimentConfig, i: int, stream: int) -> int:
    return _rng.derive_seed(_rng.derive_seed(cfg.seed, i), stream)


def _fit_slope(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    ok = np.isfinite(y) & (y > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def _batched_start(x0_list, n_per, n_fast=0):
    """Initial states for ``n_per`` trajectories from each ``x0``, stacked in order."""
    x = np.repeat(np.asarray(x0_list, dtype=float), n_per)[:, None]
    if n_fast:
        x = np.hstack([x, np.zeros((x.shape[0], n_fast))])
    return x


def _blocks(a, n_groups):
    return a.reshape(n_groups, -1)


def _group_stats(values, n_groups):
    v = _blocks(values, n_groups)
    n = v.shape[1]
    return v.mean(axis=1), v.std(axis=1, ddof=1) / math.sqrt(n)


# -- Langevin double well --------------------------------------------------------

def _overdamped_solution(cfg: ExperimentConfig, x_min: float):
    model = models.overdamped_1d(beta=cfg.beta, cost=_COSTS[cfg.cost])
    grid = fk_pde.Grid1D(x_min, cfg.x_max, cfg.n_nodes)
    return fk_pde.solve_linear_bvp(model, grid)


def run_langevin_dw(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    """Overdamped ``V0`` on a grid, then per epsilon MC ``V^eps`` and ``J^eps(u_hom)``."""
    _require(cfg, "langevin_dw")
    out = Path(cfg.out_dir)
    res = RunResult()
    sol0 = _overdamped_solution(cfg, cfg.x_min)
    sol0.to_csv(out / "langevin_overdamped_grid.csv")
    res.files.append("langevin_overdamped_grid.csv")
    policy = fk_pde.as_feedback(sol0, "homogenized")
    x0 = np.asarray(cfg.x0_list)
    v0 = fk_pde.evaluate_value(sol0, x0)
    wide = _overdamped_solution(cfg.replace(n_nodes=2 * cfg.n_nodes - 1), cfg.x_min - 1.0)
    res.notes["left_edge_sensitivity"] = {
        "x_min": cfg.x_min,
        "x_min_alt": cfg.x_min - 1.0,
        "max_abs_V0_change_at_x0": float(np.max(np.abs(fk_pde.evaluate_value(wide, x0) - v0))),
    }
    g = _COSTS[cfg.cost]

    def g_slow(x, y):
        return g(x[:, 0])

    def one(item):
        i, eps = item
        seeds = (_eps_seed(cfg, i, 0), _eps_seed(cfg, i, 1))
        try:
            model = models.langevin(eps, beta=cfg.beta, exit_at=cfg.x_max, cost=g_slow)
            dt = cfg.dt_factor * eps**2
            z0 = _batched_start(x0, cfg.n_traj, n_fast=1)
            n_all = z0.shape[0]
            psi_ens = run_ensemble(model, FeedbackPolicy.zero(1), z0, dt, cfg.t_max, n_all, seeds[0],
                                   weight_floor=cfg.weight_floor)
            cost_ens = run_ensemble(model, policy, z0, dt, cfg.t_max, n_all, seeds[1])
            rows = []
            for j, xj in enumerate(x0):
                sl = slice(j * cfg.n_traj, (j + 1) * cfg.n_traj)
                w, tr = psi_ens.exp_weight[sl], psi_ens.truncated[sl]
                bound = float(np.sum(w[tr]) / w.size)
                psi = mc_estimators.McEstimate.from_samples(w, tr, bound)
                v, v_se = mc_estimators.value_from_psi(psi, cfg.beta)
                jc = mc_estimators.McEstimate.from_samples(cost_ens.path_cost[sl], cost_ens.truncated[sl])
                rows.append([eps, xj, v, v_se, jc.mean, jc.std_error, float(v0[j]), psi.mean, psi.std_error,
                             psi.truncated_fraction, psi.truncation_bias_bound, jc.truncated_fraction, dt, ""])
            return rows, seeds, None
        except (ValueError, FloatingPointError, ArithmeticError) as exc:
            msg = f"eps={eps}: {exc}"
            nan = math.nan
            return [[eps, xj, nan, nan, nan, nan, float(v0[j]), nan, nan, nan, nan, nan, nan, msg]
                    for j, xj in enumerate(x0)], seeds, msg

    header = ["epsilon", "x0", "V_eps_mc", "V_eps_mc_se", "J_hom_mc", "J_hom_mc_se", "V0_grid", "psi_mc",
              "psi_mc_se", "psi_truncated_fraction", "psi_truncation_bias_bound", "J_truncated_fraction", "dt",
              "error"]
    rows = []
    for i, (r, seeds, err) in enumerate(_map(one, list(enumerate(cfg.epsilon_list)), threads)):
        rows.extend(r)
        res.seeds[f"eps[{i}]"] = {"epsilon": cfg.epsilon_list[i], "psi": seeds[0], "cost": seeds[1]}
        if err:
            res.errors.append(err)
    _write_csv(out / "langevin_table.csv", header, rows)
    res.files.append("langevin_table.csv")
    return res


# -- periodic multiscale potential ------------------------------------------------

def _periodic_setup(cfg: ExperimentConfig):
    p, pp = models.sine_perturbation(cfg.amplitude)
    coeffs = homogenize.cell_solution(homogenize.PeriodicPotential(p, pp, cfg.beta))
    return p, pp, coeffs


def _periodic_grids(cfg, eps, pp, coeffs, x_min=None):
    x_min = cfg.x_min if x_min is None else x_min
    grid = fk_pde.Grid1D.with_spacing(x_min, cfg.x_max, eps / cfg.nodes_per_period)
    model_eps = models.periodic_multiscale_1d(eps, cfg.beta, p_prime=pp)
    sol_eps = fk_pde.solve_linear_bvp(model_eps, grid)
    sol_0 = fk_pde.solve_linear_bvp(models.periodic_homogenized_1d(coeffs.K, cfg.beta), grid)
    return grid, model_eps, sol_eps, sol_0


def run_periodic_msp(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    """Grid ``V^eps``, ``V0`` and MC costs of the homogenized and corrected controls."""
    _require(cfg, "periodic_msp")
    out = Path(cfg.out_dir)
    res = RunResult()
    _, pp, coeffs = _periodic_setup(cfg)
    res.notes["effective_diffusivity"] = coeffs.K
    coeffs.to_csv(out / "cell_coefficients.csv")
    res.files.append("cell_coefficients.csv")
    x0 = np.asarray(cfg.x0_list)

    def one(item):
        i, eps = item
        seed = _eps_seed(cfg, i, 0)
        nan = math.nan
        try:
            grid, model_eps, sol_eps, sol_0 = _periodic_grids(cfg, eps, pp, coeffs)
            c_hom = sol_0.control
            c_cor = coeffs.correction_factor(grid.nodes / eps) * c_hom
            j_wrong = fk_pde.policy_cost(model_eps, grid, c_hom)
            j_cor = fk_pde.policy_cost(model_eps, grid, c_cor)
            stride = max(1, int(round(0.01 / grid.h)))
            curve = [[xv, ve, v0, jw, jc] for xv, ve, v0, jw, jc in zip(
                grid.nodes[::stride], sol_eps.value[::stride], sol_0.value[::stride], j_wrong[::stride],
                j_cor[::stride])]
            _, _, alt_eps, _ = _periodic_grids(cfg, eps, pp, coeffs, x_min=cfg.x_min - 1.0)
            edge = float(np.max(np.abs(fk_pde.evaluate_value(alt_eps, x0) - fk_pde.evaluate_value(sol_eps, x0))))

            hom = fk_pde.as_feedback(sol_0, "homogenized")
            cor = homogenize.corrected_control(coeffs, hom, eps)
            model = models.periodic_multiscale(eps, cfg.beta, p_prime=pp, exit_at=cfg.x_max)
            dt = cfg.dt_factor * eps**2
            z0 = _batched_start(x0, cfg.n_traj)
            n_all = z0.shape[0]
            ens_w = run_ensemble(model, hom, z0, dt, cfg.t_max, n_all, seed)
            ens_c = run_ensemble(model, cor, z0, dt, cfg.t_max, n_all, seed)
            mw, sw = _group_stats(ens_w.path_cost, x0.size)
            mc_, sc = _group_stats(ens_c.path_cost, x0.size)
            tw = _blocks(ens_w.truncated, x0.size).mean(axis=1)
            tc = _blocks(ens_c.truncated, x0.size).mean(axis=1)
            ve = fk_pde.evaluate_value(sol_eps, x0)
            v0 = fk_pde.evaluate_value(sol_0, x0)
            jwg = np.interp(x0, grid.nodes, j_wrong)
            jcg = np.interp(x0, grid.nodes, j_cor)
            points = [[eps, x0[j], ve[j], v0[j], mw[j], sw[j], mc_[j], sc[j], jwg[j], jcg[j], tw[j], tc[j], dt, ""]
                      for j in range(x0.size)]
            return curve, points, seed, edge, None
        except (ValueError, RuntimeError, FloatingPointError, ArithmeticError) as exc:
            msg = f"eps={eps}: {exc}"
            points = [[eps, xj] + [nan] * 11 + [msg] for xj in x0]
            return [], points, seed, nan, msg

    results = _map(one, list(enumerate(cfg.epsilon_list)), threads)
    points = []
    edges = {}
    for i, (curve, pts, seed, edge, err) in enumerate(results):
        eps = cfg.epsilon_list[i]
        name = f"periodic_curves_eps{i}.csv"
        _write_csv(out / name, ["x", "V_eps_grid", "V0_grid", "J_wrong_grid", "J_corrected_grid"], curve)
        res.files.append(name)
        points.extend(pts)
        res.seeds[f"eps[{i}]"] = {"epsilon": eps, "mc": seed}
        edges[repr(eps)] = edge
        if err:
            res.errors.append(err)
    header = ["epsilon", "x0", "V_eps_grid", "V0_grid", "J_wrong_mc", "J_wrong_mc_se", "J_corrected_mc",
              "J_corrected_mc_se", "J_wrong_grid", "J_corrected_grid", "J_wrong_truncated_fraction",
              "J_corrected_truncated_fraction", "dt", "error"]
    _write_csv(out / "periodic_points.csv", header, points)
    res.files.append("periodic_points.csv")
    res.notes["left_edge_sensitivity"] = {
        "x_min": cfg.x_min, "x_min_alt": cfg.x_min - 1.0, "max_abs_V_eps_change_at_x0": edges,
    }
    return res


# -- L2 convergence ------------------------------------------------------------------

def _l2(x, f) -> float:
    return math.sqrt(float(np.trapezoid(f * f, x)))


def run_l2_convergence(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    """``||V^eps - V0||``, ``||c^eps - c_corrected||`` and ``||c^eps - c_hom||`` in L2 over ``O``."""
    _require(cfg, "l2_convergence")
    out = Path(cfg.out_dir)
    res = RunResult()
    _, pp, coeffs = _periodic_setup(cfg)

    def one(eps):
        try:
            grid, _, sol_eps, sol_0 = _periodic_grids(cfg, eps, pp, coeffs)
            x = grid.nodes
            c_cor = coeffs.correction_factor(x / eps) * sol_0.control
            return [eps, _l2(x, sol_eps.value - sol_0.value), _l2(x, sol_eps.control - c_cor),
                    _l2(x, sol_eps.control - sol_0.control), grid.n_nodes, ""], None
        except (ValueError, RuntimeError, FloatingPointError) as exc:
            msg = f"eps={eps}: {exc}"
            return [eps, math.nan, math.nan, math.nan, 0, msg], msg

    rows = []
    for row, err in _map(one, cfg.epsilon_list, threads):
        rows.append(row)
        if err:
            res.errors.append(err)
    _write_csv(out / "l2_errors.csv",
               ["epsilon", "err_V_grid", "err_c_corrected_grid", "err_c_uncorrected_grid", "n_nodes", "error"],
               rows)
    eps = [r[0] for r in rows]
    slopes = [["err_V_grid", _fit_slope(eps, [r[1] for r in rows])],
              ["err_c_corrected_grid", _fit_slope(eps, [r[2] for r in rows])],
              ["err_c_uncorrected_grid", _fit_slope(eps, [r[3] for r in rows])]]
    _write_csv(out / "l2_slopes.csv", ["quantity", "loglog_slope"], slopes)
    res.files += ["l2_errors.csv", "l2_slopes.csv"]
    res.notes["slopes"] = {k: v for k, v in slopes}
    return res


# -- LQR ----------------------------------------------------------------------------------

def fixture_path(name: str) -> Path:
    """Path of a shipped LQR fixture (``synthetic`` or ``decoupled``) or of a user file."""
    builtin = {"synthetic": "lqr_synthetic_k2_n6.txt", "decoupled": "lqr_decoupled_k2_n4.txt"}
    if name in builtin:
        return Path(__file__).with_name("data") / builtin[name]
    return Path(name)


def run_lqr_sweep(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    _require(cfg, "lqr_sweep")
    out = Path(cfg.out_dir)
    res = RunResult()
    base = dataclasses.replace(lqr.load_system(fixture_path(cfg.fixture), validate=False), beta=cfg.beta)
    base.validate(cfg.epsilon_list)
    study = lqr.convergence_study(base, cfg.epsilon_list, cfg.tol)
    study.to_csv(out / "lqr_convergence.csv")
    res.files.append("lqr_convergence.csv")
    res.notes["slope"] = study.slope()
    res.notes["reduced_Q"] = study.reduced_system.Q
    res.notes["reduced_eta"] = lqr.reduced_eta(study.reduced_system, study.reduced)
    res.errors.extend(f"eps={r.epsilon}: {r.error}" for r in study.rows if r.error)
    return res


# -- entropy identity ----------------------------------------------------------------

def run_entropy_gap(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    """Cost gap of constant offsets from the optimal control against ``KL / beta``."""
    _require(cfg, "entropy_gap")
    if not cfg.x0_list:
        raise ConfigError("[entropy_gap] x0_list must hold one starting point")
    out = Path(cfg.out_dir)
    res = RunResult()
    sol = _overdamped_solution(cfg, cfg.x_min)
    policy = fk_pde.as_feedback(sol, "optimal")
    model = models.overdamped(beta=cfg.beta, exit_at=cfg.x_max)
    seed = _rng.derive_seed(cfg.seed, 0)
    study = mc_estimators.quadratic_gap_study(model, policy, cfg.delta_list, [cfg.x0_list[0]], cfg.dt, cfg.t_max,
                                              cfg.n_traj, seed)
    rows = [[r.delta, r.gap, r.gap_se, r.kl_over_beta, r.kl_over_beta_se, r.identity_se, r.identity_z,
             r.truncated_fraction, r.error or ""] for r in study.rows]
    _write_csv(out / "entropy_gap.csv",
               ["delta", "gap_mc", "gap_mc_se", "kl_over_beta_mc", "kl_over_beta_mc_se", "identity_se",
                "identity_z", "truncated_fraction", "error"], rows)
    res.files.append("entropy_gap.csv")
    res.seeds["mc"] = seed
    res.notes["slope"] = study.slope
    res.notes["V_grid_at_x0"] = fk_pde.evaluate_value(sol, cfg.x0_list[0])
    res.errors.extend(f"delta={r.delta}: {r.error}" for r in study.rows if r.error)
    return res


RUNNERS = {
    "langevin_dw": run_langevin_dw,
    "periodic_msp": run_periodic_msp,
    "l2_convergence": run_l2_convergence,
    "lqr_sweep": run_lqr_sweep,
    "entropy_gap": run_entropy_gap,
}


def _require(cfg, tag):
    if cfg.experiment != tag:
        raise ConfigError(f"config is for {cfg.experiment!r}, not {tag!r}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    import scipy

    from . import __version__

    return {"msoc": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run(cfg: ExperimentConfig, threads: Optional[int] = None) -> RunResult:
    """Run ``cfg`` and write ``manifest.json`` next to its tables.

    The manifest is written even when the driver raises; the exception is
    then re-raised after being recorded.
    """
    threads = threads_from_env() if threads is None else threads
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.time()
    result = RunResult()
    failure = None
    try:
        result = RUNNERS[cfg.experiment](cfg, threads=threads)
    except Exception as exc:  # recorded in the manifest, then re-raised
        failure = exc
        result.errors.append(f"{type(exc).__name__}: {exc}")
    manifest = {
        "format": MANIFEST_FORMAT,
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "seeds": {"base": cfg.seed, **result.seeds},
        "versions": _versions(),
        "threads": threads,
        "wall_clock_seconds": round(time.time() - start, 3),
        "outputs": {name: _sha256(out / name) for name in result.files if (out / name).exists()},
        "notes": result.notes,
        "errors": result.errors,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    if failure is not None:
        raise failure
    return result


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")
