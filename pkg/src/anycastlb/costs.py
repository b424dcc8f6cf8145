"""Cost functions and their one-dimensional Lagrangian subproblem solvers.

Serving S requests at a proxy of capacity T costs eta*S/(1 - S/T), the
M/G/1 aggregate queuing delay, with a pole at S = T.  Offloading to the
data-center costs theta*A*(1-x)*(d + gamma*A*(1-x)), affine-in-load
round-trip latency.  Both are strictly convex, so the per-node relaxed
subproblems have closed-form minimizers; a golden-section oracle is kept
alongside to verify them and to support arbitrary convex costs.

The scalar solvers and their vectorized twins must stay expression-for-
expression identical: the distributed simulation runs the scalar path per
node and is required to reproduce the centralized vectorized path bit for
bit.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import BadInterval, DimensionMismatch, NegativeLoad, OutOfRangeControl
from .model import SystemInstance

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def proxy_cost(eta_i: float, T_i: float, S_i: float) -> float:
    """Queuing-delay cost of load S_i at one proxy; +inf at or above capacity."""
    if S_i < 0.0:
        raise NegativeLoad(f"proxy load {S_i!r} is negative")
    if S_i >= T_i:
        return math.inf
    return eta_i * S_i / (1.0 - S_i / T_i)


def offload_cost(theta_i: float, d_i: float, gamma_i: float, A_i: float,
                 x_i: float) -> float:
    """Round-trip cost of routing the (1-x_i) fraction to the data-center."""
    if not 0.0 <= x_i <= 1.0:
        raise OutOfRangeControl(f"control {x_i!r} outside [0, 1]")
    off = A_i * (1.0 - x_i)
    return theta_i * off * (d_i + gamma_i * off)


def total_cost(instance: SystemInstance, x: np.ndarray, S: np.ndarray) -> float:
    """Aggregate cost W(x, S); +inf when any proxy is at or beyond capacity."""
    x = np.asarray(x, dtype=float)
    S = np.asarray(S, dtype=float)
    n = instance.n
    if x.shape != (n,) or S.shape != (n,):
        raise DimensionMismatch(f"total_cost: expected {n}-vectors, got {x.shape}, {S.shape}")
    if (S < 0).any():
        raise NegativeLoad("proxy loads must be nonnegative")
    if ((x < 0) | (x > 1)).any():
        raise OutOfRangeControl("controls must lie in [0, 1]")
    T = instance.T
    if (S >= T).any():
        return math.inf
    c = instance.costs
    proxy = float(np.sum(c.eta * S / (1.0 - S / T)))
    off = instance.A * (1.0 - x)
    return proxy + float(np.sum(c.theta * off * (c.d + c.gamma_cost * off)))


def solve_sub_S(eta_i: float, T_i: float, mu_i: float) -> float:
    """Minimizer over [0, T_i] of g_i(S) - mu_i*S.

    Keep in lockstep with solve_sub_S_vec.
    """
    if mu_i <= 0.0:
        return 0.0
    return T_i * max(0.0, 1.0 - math.sqrt(eta_i / mu_i))


def solve_sub_S_vec(eta: np.ndarray, T: np.ndarray, mu: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        s = T * np.maximum(0.0, 1.0 - np.sqrt(eta / mu))
    return np.where(mu <= 0.0, 0.0, s)


def solve_sub_x(theta_i: float, d_i: float, gamma_i: float, A_i: float,
                beta_i: float) -> float:
    """Minimizer over [0, 1] of h_i(x) + A_i*beta_i*x.

    With zero arrivals the objective is constant; by convention the node
    routes its (empty) traffic locally, x = 1.  Keep in lockstep with
    solve_sub_x_vec.
    """
    if A_i == 0.0:
        return 1.0
    x = 1.0 + (theta_i * d_i - beta_i) / (2.0 * theta_i * gamma_i * A_i)
    return min(1.0, max(0.0, x))


def solve_sub_x_vec(theta: np.ndarray, d: np.ndarray, gamma: np.ndarray,
                    A: np.ndarray, beta: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        x = 1.0 + (theta * d - beta) / (2.0 * theta * gamma * A)
    return np.where(A == 0.0, 1.0, np.clip(x, 0.0, 1.0))


def minimize_scalar_convex(f, lo: float, hi: float, tol: float = 1e-8) -> float:
    """Golden-section search for the minimizer of a convex f on [lo, hi]."""
    if not lo < hi:
        raise BadInterval(f"need lo < hi, got [{lo!r}, {hi!r}]")
    if tol <= 0.0:
        raise BadInterval(f"tolerance must be positive, got {tol!r}")
    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)
