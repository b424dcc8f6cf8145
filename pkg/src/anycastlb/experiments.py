"""Instance generation, parameter sweeps and CSV reporting.

A sweep draws ``n_trials`` random instances at every mean-load grid point,
runs the selected algorithms, and aggregates final cost (price-based
algorithms) or uncontrollably-overloaded node counts (greedy dynamics)
into per-grid-point summary rows.  Per-trial randomness comes from
independent streams seeded by (master seed, grid index, trial id), so a
config plus seed reproduces the CSV byte for byte.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import dual as dual_mod
from . import fastcontrol as fc_mod
from . import greedy as greedy_mod
from .errors import EmptyInput, GeneratorFailure, InvalidInstance
from .model import SystemInstance, load_matrix

KNOWN_ALGORITHMS = ("dual", "fastcontrol", "greedy")


@dataclass(frozen=True)
class CorrelationSpec:
    kind: str                    # identity | diagonally-dominant | uniform-row-stochastic | two-block | from-file
    diag_min: float = 0.6
    alpha: float = 0.6
    beta: float = 0.6
    path: str = ""

    def __post_init__(self):
        kinds = ("identity", "diagonally-dominant", "uniform-row-stochastic",
                 "two-block", "from-file")
        if self.kind not in kinds:
            raise GeneratorFailure(f"unknown correlation generator {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    n_nodes: int = 60
    n_trials: int = 100
    mean_load_grid: tuple = (0.1, 0.5, 1.0, 2.0, 5.0, 10.0)
    correlation: CorrelationSpec = field(
        default_factory=lambda: CorrelationSpec("diagonally-dominant", diag_min=0.6))
    algorithms: tuple = ("dual", "greedy")
    master_seed: int = 0
    arrival_dist: str = "poisson"        # poisson | gamma | fixed
    capacity: float = 0.7
    eta: float = 1.0
    theta: float = 10.0
    gamma_cost: float = 1.0
    epsilon: float = 4.0                 # dual neighborhood at unit mean load; scaled by max(1, A_bar^2)
    dual_max_iters: int = 30000
    dual_stop_frac: float = 0.02         # stop once best-cost gain per window < frac * epsilon
    gamma: float = 1.0                   # control-packet rate parameter
    channel_mode: str = "exact"
    channel_scale: float = 1e6
    ode_dt: float = 0.02
    ode_horizon: float = 150.0
    ode_steady_tol: float = 1e-6
    ode_record_every: int = 500
    x_tol: float = 1e-3
    s_tol: float = 1e-6

    def __post_init__(self):
        if self.n_nodes < 1 or self.n_trials < 1:
            raise InvalidInstance("n_nodes and n_trials must be at least 1")
        if not self.mean_load_grid:
            raise InvalidInstance("mean_load_grid must be nonempty")
        if self.master_seed < 0:
            raise InvalidInstance("master_seed must be nonnegative")
        unknown = set(self.algorithms) - set(KNOWN_ALGORITHMS)
        if unknown:
            raise InvalidInstance(f"unknown algorithms: {sorted(unknown)}")
        if self.arrival_dist not in ("poisson", "gamma", "fixed"):
            raise InvalidInstance(f"unknown arrival_dist {self.arrival_dist!r}")

    def ode_config(self) -> greedy_mod.OdeConfig:
        return greedy_mod.OdeConfig(
            dt=self.ode_dt, horizon=self.ode_horizon,
            steady_tol=self.ode_steady_tol, record_every=self.ode_record_every,
        )


def config_from_dict(spec: dict, base_dir: str = ".") -> ExperimentConfig:
    spec = dict(spec)
    corr = spec.pop("correlation", None)
    kwargs = {}
    if corr is not None:
        corr = dict(corr)
        kind = corr.pop("kind", "diagonally-dominant")
        if kind == "from-file" and "path" in corr:
            corr["path"] = os.path.join(base_dir, corr["path"])
        kwargs["correlation"] = CorrelationSpec(kind, **corr)
    costs = spec.pop("costs", None)
    if costs is not None:
        for key in ("eta", "theta", "gamma_cost"):
            if key in costs:
                kwargs[key] = float(costs[key])
    ode = spec.pop("ode", None)
    if ode is not None:
        for key in ("dt", "horizon", "steady_tol", "record_every"):
            if key in ode:
                kwargs[f"ode_{key}"] = ode[key]
    for key, value in spec.items():
        if key in ("mean_load_grid", "algorithms"):
            value = tuple(value)
        kwargs[key] = value
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise InvalidInstance(f"bad experiment config: {exc}") from exc


def config_from_json(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except OSError as exc:
        raise InvalidInstance(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInstance(f"{path} is not valid JSON: {exc}") from exc
    return config_from_dict(spec, base_dir=os.path.dirname(os.path.abspath(path)))


def generate_correlation(spec: CorrelationSpec, n: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Draw a row-stochastic correlation matrix; rows renormalized exactly."""
    if spec.kind == "identity":
        return np.eye(n)
    if spec.kind == "from-file":
        return np.array(load_matrix(spec.path))
    if spec.kind == "diagonally-dominant":
        # High self-correlation with geographically clustered spillover:
        # each node's off-diagonal mass goes to two random neighbors (one
        # neighbor spills most of its escaping traffic onto few nearby
        # proxies, not uniformly across the ring).
        if not 0.0 <= spec.diag_min < 1.0:
            raise GeneratorFailure(f"diag_min must lie in [0, 1), got {spec.diag_min!r}")
        if n == 1:
            return np.array([[1.0]])
        C = np.zeros((n, n))
        for i in range(n):
            diag = rng.uniform(spec.diag_min, 1.0)
            k = min(2, n - 1)
            others = np.delete(np.arange(n), i)
            nbrs = rng.choice(others, size=k, replace=False)
            C[i, i] = diag
            C[i, nbrs] = (1.0 - diag) / k
    elif spec.kind == "uniform-row-stochastic":
        C = rng.dirichlet(np.ones(n), size=n)
    else:  # two-block
        if n < 2:
            raise GeneratorFailure("two-block generator needs at least 2 nodes")
        if not (0.0 <= spec.alpha <= 1.0 and 0.0 <= spec.beta <= 1.0):
            raise GeneratorFailure("two-block alpha and beta must lie in [0, 1]")
        h = n // 2
        C = np.empty((n, n))
        C[:h, :h] = spec.alpha / h
        C[:h, h:] = (1.0 - spec.alpha) / (n - h)
        C[h:, :h] = (1.0 - spec.beta) / h
        C[h:, h:] = spec.beta / (n - h)
    C /= C.sum(axis=1, keepdims=True)
    return C


def trial_rng(config: ExperimentConfig, grid_index: int, trial: int) -> np.random.Generator:
    """Independent per-trial stream keyed by (master seed, grid index, trial)."""
    return np.random.default_rng((config.master_seed, grid_index, trial))


def generate_instance(config: ExperimentConfig, grid_index: int,
                      trial: int) -> SystemInstance:
    """Draw one instance: correlation, then arrivals, then latencies.

    Deterministic given (master seed, grid index, trial id); the draw order
    is part of the reproducibility contract.
    """
    rng = trial_rng(config, grid_index, trial)
    n = config.n_nodes
    a_bar = float(config.mean_load_grid[grid_index])
    C = generate_correlation(config.correlation, n, rng)
    if config.arrival_dist == "poisson":
        A = rng.poisson(a_bar, size=n).astype(float)
    elif config.arrival_dist == "gamma":
        A = rng.gamma(a_bar, 1.0, size=n) if a_bar > 0 else np.zeros(n)
    else:
        A = np.full(n, a_bar)
    d = rng.uniform(0.0, 1.0, size=n)
    return SystemInstance.build(
        C, A, config.capacity,
        eta=config.eta, theta=config.theta, d=d, gamma_cost=config.gamma_cost,
    )


@dataclass
class TrialResult:
    grid_index: int
    a_bar: float
    trial: int
    algorithm: str
    A: np.ndarray
    d: np.ndarray
    cost: float            # final (best) cost; +inf if never feasible; nan for greedy
    overloaded: int        # uncontrollably-overloaded node count (greedy)
    iterations: int        # dual iterations or ODE steps to the recorded end
    converged: bool

    @property
    def value(self) -> float:
        return float(self.overloaded) if self.algorithm == "greedy" else self.cost


def run_trial(config: ExperimentConfig, grid_index: int, trial: int) -> list[TrialResult]:
    """Generate one instance and run every selected algorithm on it."""
    instance = generate_instance(config, grid_index, trial)
    # distinct stream key: the channel noise never aliases instance draws
    channel_seed = int(np.random.default_rng(
        (config.master_seed, grid_index, trial, 1)).integers(2 ** 63))
    a_bar = float(config.mean_load_grid[grid_index])
    results = []
    for algo in config.algorithms:
        if algo in ("dual", "fastcontrol"):
            # costs grow like theta*gamma*A_bar^2, so the target neighborhood
            # (and with it the step size) scales with the grid point
            eps_eff = config.epsilon * max(1.0, a_bar * a_bar)
            stop_tol = config.dual_stop_frac * eps_eff
            policy = dual_mod.StepSizePolicy.from_epsilon(
                eps_eff, instance, tight=True)
            if algo == "dual":
                report = dual_mod.run_dual(
                    instance, policy, max_iters=config.dual_max_iters,
                    stop_tol=stop_tol, record_trajectory=False,
                    with_dual_obj=False)
            else:
                report = fc_mod.run_distributed(
                    instance, policy, gamma=config.gamma,
                    max_iters=config.dual_max_iters, stop_tol=stop_tol,
                    mode=config.channel_mode, scale=config.channel_scale,
                    seed=channel_seed, record_trajectory=False,
                    with_dual_obj=False)
            results.append(TrialResult(
                grid_index=grid_index, a_bar=a_bar, trial=trial, algorithm=algo,
                A=instance.A, d=instance.costs.d, cost=report.best_cost,
                overloaded=0, iterations=report.iterations,
                converged=report.converged,
            ))
        else:
            cfg = config.ode_config()
            traj = greedy_mod.integrate(instance, cfg, np.full(instance.n, 0.5))
            x_f, s_f = traj.x[-1], traj.S[-1]
            flagged = np.where(
                (x_f < config.x_tol) & (s_f > instance.T + config.s_tol))[0]
            results.append(TrialResult(
                grid_index=grid_index, a_bar=a_bar, trial=trial, algorithm="greedy",
                A=instance.A, d=instance.costs.d, cost=math.nan,
                overloaded=int(len(flagged)), iterations=len(traj.t),
                converged=traj.steady,
            ))
    return results


@dataclass
class SummaryStats:
    grid_index: int
    a_bar: float
    algorithm: str
    mean: float
    std: float
    n_trials: int
    n_infeasible: int


def summarize(results: list[TrialResult]) -> SummaryStats:
    """Mean and unbiased std of one grid point's trial values.

    Infinite values are excluded from the moments and counted separately;
    a single-trial summary reports std 0.
    """
    if not results:
        raise EmptyInput("no trial results to summarize")
    keys = {(r.grid_index, r.algorithm) for r in results}
    if len(keys) != 1:
        raise InvalidInstance(f"summarize expects one grid point and algorithm, got {keys}")
    values = np.array([r.value for r in results])
    finite = values[np.isfinite(values)]
    n_inf = int(len(values) - len(finite))
    if len(finite) == 0:
        mean = std = math.nan
    else:
        mean = float(finite.mean())
        std = float(finite.std(ddof=1)) if len(finite) > 1 else 0.0
    return SummaryStats(
        grid_index=results[0].grid_index, a_bar=results[0].a_bar,
        algorithm=results[0].algorithm, mean=mean, std=std,
        n_trials=len(values), n_infeasible=n_inf,
    )


def run_sweep(config: ExperimentConfig,
              out_csv=None) -> tuple[list[SummaryStats], list[TrialResult]]:
    """Run the full grid; optionally write the summary CSV."""
    all_results: list[TrialResult] = []
    stats: list[SummaryStats] = []
    for gi in range(len(config.mean_load_grid)):
        per_algo: dict[str, list[TrialResult]] = {a: [] for a in config.algorithms}
        for trial in range(config.n_trials):
            for res in run_trial(config, gi, trial):
                per_algo[res.algorithm].append(res)
                all_results.append(res)
        for algo in config.algorithms:
            stats.append(summarize(per_algo[algo]))
    if out_csv is not None:
        write_summary_csv(stats, config, out_csv)
    return stats, all_results


def write_summary_csv(stats: list[SummaryStats], config: ExperimentConfig,
                      path) -> None:
    order = {a: i for i, a in enumerate(config.algorithms)}
    rows = sorted(stats, key=lambda s: (s.grid_index, order.get(s.algorithm, 99)))
    with open(path, "w") as fh:
        fh.write("A_bar,algo,mean,std,n_trials,n_infeasible,seed\n")
        for s in rows:
            fh.write(f"{s.a_bar:.10g},{s.algorithm},{s.mean:.10g},{s.std:.10g},"
                     f"{s.n_trials},{s.n_infeasible},{config.master_seed}\n")
