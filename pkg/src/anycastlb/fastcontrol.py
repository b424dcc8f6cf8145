"""Distributed dual iteration over an anycast control channel.

Each node runs as an autonomous agent that sees only local observables:
its own arrival rate, its proxy's observed load, and the reception rate
of its control-packet category.  Coordination happens through
FastControl packets: node i forces generation of category-j packets at a
rate proportional to its own price mu_i, and the anycast channel's
delivery probabilities make the per-category reception rate at node i
telescope to gamma times its coupling factor beta_i.  Dividing by gamma
recovers beta_i with no explicit message exchange.

The exact-rate channel evaluates delivered rates through that telescoping
identity (the gamma factor cancels symbolically), which makes the
distributed run reproduce the centralized iteration bit for bit.  The
sampled channel draws Poisson packet counts instead and recovers beta by
honest division.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import solve_sub_S, solve_sub_x
from .dual import (
    ConvergenceReport,
    DualState,
    RunRecorder,
    StepSizePolicy,
    beta_projection,
)
from .errors import NonPositiveInput, UnreachableCategory
from .model import SystemInstance, load_map


def validate_channel_support(C: np.ndarray) -> None:
    """Reject matrices whose zero pattern breaks the control protocol.

    Node i cannot encode the term mu_i*C[j][i] for node j when C[i][j] = 0:
    no traffic it influences ever reaches j.  Zero entries are fine only
    when the transposed entry is zero as well.
    """
    bad = np.argwhere((C == 0.0) & (C.T > 0.0))
    if bad.size:
        i, j = map(int, bad[0])
        raise UnreachableCategory(i, j)


def generation_rates(mu_i: float, c_row: np.ndarray, c_col: np.ndarray,
                     gamma: float) -> np.ndarray:
    """Control-packet generation rates forced by one node, per category.

    ``c_row`` and ``c_col`` are the node's row and column of the correlation
    matrix; category j is generated at rate gamma*mu_i*c_col[j]/c_row[j].
    """
    if gamma <= 0:
        raise NonPositiveInput(f"gamma must be positive, got {gamma!r}")
    if mu_i < 0:
        raise NonPositiveInput(f"price must be nonnegative, got {mu_i!r}")
    c_row = np.asarray(c_row, dtype=float)
    c_col = np.asarray(c_col, dtype=float)
    rates = np.zeros_like(c_row)
    open_cat = c_row > 0.0
    blocked = ~open_cat & (c_col > 0.0)
    if blocked.any():
        raise UnreachableCategory(-1, int(np.argmax(blocked)))
    rates[open_cat] = gamma * mu_i * c_col[open_cat] / c_row[open_cat]
    return rates


def recover_beta(R_i: float, gamma: float) -> float:
    """Coupling factor from a category reception rate: beta_i = R_i/gamma."""
    if gamma <= 0:
        raise NonPositiveInput(f"gamma must be positive, got {gamma!r}")
    return R_i / gamma


@dataclass
class AnycastChannel:
    """Delivery model for control traffic: exact rates or sampled packets."""

    mode: str = "exact"
    scale: float = 1e6
    seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.mode not in ("exact", "sampled"):
            raise ValueError(f"unknown channel mode {self.mode!r}")
        if self.mode == "sampled" and self.scale <= 0:
            raise NonPositiveInput(f"scale must be positive, got {self.scale!r}")
        self.rng = np.random.default_rng(self.seed)


def deliver(channel: AnycastChannel, rates: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Per-category reception rates: R[i] = sum_j rates[j][i]*C[j][i].

    The sampled mode thins the aggregate through a Poisson draw at
    ``scale`` packets per unit rate, normalized back to a rate.
    """
    R = np.einsum("ji,ji->i", np.asarray(rates, dtype=float), C)
    if channel.mode == "sampled":
        R = channel.rng.poisson(R * channel.scale) / channel.scale
    return R


@dataclass
class LocalObservation:
    """Everything one agent is allowed to see in one round."""

    a: float        # DNS-influenced arrival rate
    r: float        # reception rate of the agent's own control category
    s_obs: float = float("nan")   # observed proxy load, filled mid-round


@dataclass
class NodeAgent:
    """One node's controller; holds strictly local knowledge and state."""

    node: int
    a: float
    t: float
    eta: float
    theta: float
    d: float
    gamma_cost: float
    c_row: np.ndarray
    c_col: np.ndarray
    mu: float = 0.0
    x: float = 0.0
    s: float = 0.0

    @classmethod
    def from_instance(cls, instance: SystemInstance, i: int) -> "NodeAgent":
        c = instance.costs
        return cls(
            node=i,
            a=float(instance.A[i]),
            t=float(instance.T[i]),
            eta=float(c.eta[i]),
            theta=float(c.theta[i]),
            d=float(c.d[i]),
            gamma_cost=float(c.gamma_cost[i]),
            c_row=instance.C[i, :].copy(),
            c_col=instance.C[:, i].copy(),
        )

    def control_rates(self, gamma: float) -> np.ndarray:
        return generation_rates(self.mu, self.c_row, self.c_col, gamma)

    def decide(self, beta_i: float) -> tuple[float, float]:
        """Solve both subproblems at the current price and recovered factor."""
        self.x = solve_sub_x(self.theta, self.d, self.gamma_cost, self.a, beta_i)
        self.s = solve_sub_S(self.eta, self.t, self.mu)
        return self.x, self.s

    def observe_load(self, s_obs_i: float, alpha: float) -> float:
        """Price update from the observed load; returns the new price."""
        self.mu = max(0.0, self.mu + alpha * (s_obs_i - self.s))
        return self.mu


def run_distributed(instance: SystemInstance, policy: StepSizePolicy,
                    gamma: float = 1.0, max_iters: int = 20000,
                    stop_tol: float = 0.0, mode: str = "exact",
                    scale: float = 1e6, seed: int = 0,
                    record_trajectory: bool = True,
                    with_dual_obj: bool = True) -> ConvergenceReport:
    """Synchronous-round simulation of the per-node dual algorithm.

    Every round: agents publish control-packet rates from their prices, the
    channel delivers per-category receptions, each agent recovers its
    coupling factor and solves its subproblems, the data plane responds with
    the observed loads, and each agent takes its local price step.
    """
    if gamma <= 0:
        raise NonPositiveInput(f"gamma must be positive, got {gamma!r}")
    validate_channel_support(instance.C)
    channel = AnycastChannel(mode=mode, scale=scale, seed=seed)
    n = instance.n
    agents = [NodeAgent.from_instance(instance, i) for i in range(n)]

    rec = RunRecorder(instance, max_iters, record_trajectory, with_dual_obj)
    R_traj = np.empty((max_iters, n)) if record_trajectory else None
    overhead = np.empty(max_iters)
    converged = False

    for k in range(max_iters):
        mu_vec = np.array([ag.mu for ag in agents])
        rates = np.stack([ag.control_rates(gamma) for ag in agents])
        overhead[k] = float(rates.sum())

        beta = beta_projection(instance.C, mu_vec)
        if channel.mode == "exact":
            # Rate-level delivery: the telescoping identity gives the exact
            # reception gamma*beta_i, so recovery cancels gamma symbolically.
            R = gamma * beta
            beta_hat = beta
        else:
            R = deliver(channel, rates, instance.C)
            beta_hat = np.array([recover_beta(float(R[i]), gamma) for i in range(n)])

        decisions = [agents[i].decide(float(beta_hat[i])) for i in range(n)]
        x = np.array([d[0] for d in decisions])
        S = np.array([d[1] for d in decisions])
        S_obs = load_map(instance.C, instance.A, x)
        mu_next = np.array([
            agents[i].observe_load(float(S_obs[i]), policy.alpha) for i in range(n)
        ])

        rec.log(DualState(mu=mu_next, x=x, S=S, S_obs=S_obs, beta=beta_hat, k=k + 1))
        if record_trajectory:
            R_traj[k] = R
        if rec.should_stop(stop_tol):
            converged = True
            break

    report = rec.finish(policy.alpha, converged)
    report.R = R_traj[:report.iterations].copy() if record_trajectory else None
    report.overhead = overhead[:report.iterations].copy()
    report.overhead_total = float(report.overhead.sum())
    return report
