"""Projected super-gradient iteration on the dual of the load-routing problem.

Each node i carries a nonnegative price mu_i for its capacity constraint.
One step evaluates the per-node subproblem minimizers at the current
prices, observes the resulting proxy loads, and moves each price along
the super-gradient S_obs - S, projected back onto mu >= 0.  A centralized
reference solver (grid refinement or projected gradient) provides the
ground-truth optimum for cross-validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .costs import solve_sub_S_vec, solve_sub_x_vec
from .errors import DimensionMismatch, InfeasibleEverywhere, NonPositiveInput
from .model import SystemInstance, load_map, routing_matrix

STOP_WINDOW = 100  # iterations of flat best-cost required to declare convergence


def supergradient_norm_bound(A_max: float, T_max: float, n: int) -> float:
    """Uniform bound on the squared l2 norm of every dual super-gradient."""
    return A_max ** 2 + n * T_max ** 2


def step_size(epsilon: float, A_max: float, T_max: float, n: int) -> float:
    """Constant step size guaranteeing convergence to an epsilon-neighborhood."""
    if epsilon <= 0 or A_max <= 0 or T_max <= 0 or n <= 0:
        raise NonPositiveInput(
            f"all of epsilon={epsilon!r}, A_max={A_max!r}, T_max={T_max!r}, n={n!r} "
            "must be positive"
        )
    return 2.0 * epsilon / supergradient_norm_bound(A_max, T_max, n)


@dataclass(frozen=True)
class StepSizePolicy:
    """Constant dual step size, either given directly or derived from epsilon."""

    alpha: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise NonPositiveInput(f"step size must be positive, got {self.alpha!r}")

    @classmethod
    def constant(cls, alpha: float) -> "StepSizePolicy":
        return cls(alpha)

    @classmethod
    def from_epsilon(cls, epsilon: float, instance: SystemInstance,
                     tight: bool = False) -> "StepSizePolicy":
        """Derive alpha = 2*epsilon / (bound on sup-gradient norm squared).

        The default bound is A_max^2 + N*T_max^2 with A_max = sum(A).  With
        ``tight`` the per-node bound sum(max(S_bar_i, T_i)^2) is used instead,
        where S_bar is the largest achievable observed load; it never exceeds
        the default bound, so the same convergence guarantee applies with a
        larger (faster) step.
        """
        if epsilon <= 0:
            raise NonPositiveInput(f"epsilon must be positive, got {epsilon!r}")
        if tight:
            s_bar = load_map(instance.C, instance.A, np.ones(instance.n))
            bound = float(np.sum(np.maximum(s_bar, instance.T) ** 2))
            if bound <= 0:
                bound = float(np.sum(instance.T ** 2))
            return cls(2.0 * epsilon / bound)
        A_max = float(instance.A.sum())
        T_max = float(instance.T.max())
        if A_max <= 0:
            # no traffic anywhere; any positive step converges immediately
            return cls(2.0 * epsilon / (instance.n * T_max ** 2))
        return cls(step_size(epsilon, A_max, T_max, instance.n))


def beta_projection(C: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Coupling factor per node: beta[i] = sum_j mu[j]*C[i][j]."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (C.shape[0],):
        raise DimensionMismatch(f"beta_projection: C is {C.shape}, mu is {mu.shape}")
    return C @ mu


@dataclass(frozen=True)
class DualState:
    """One iterate of the dual loop (primal fields are the last minimizers)."""

    mu: np.ndarray
    x: np.ndarray
    S: np.ndarray
    S_obs: np.ndarray
    beta: np.ndarray
    k: int = 0

    @classmethod
    def cold_start(cls, n: int) -> "DualState":
        z = np.zeros(n)
        return cls(mu=z, x=z.copy(), S=z.copy(), S_obs=z.copy(), beta=z.copy(), k=0)


def dual_step(state: DualState, alpha: float, instance: SystemInstance) -> DualState:
    """Advance the dual iteration by one synchronous round.

    Primal updates use the pre-update prices; the observed loads respond to
    the fresh controls within the round.
    """
    c = instance.costs
    beta = beta_projection(instance.C, state.mu)
    x = solve_sub_x_vec(c.theta, c.d, c.gamma_cost, instance.A, beta)
    S = solve_sub_S_vec(c.eta, instance.T, state.mu)
    S_obs = load_map(instance.C, instance.A, x)
    mu = np.maximum(0.0, state.mu + alpha * (S_obs - S))
    return DualState(mu=mu, x=x, S=S, S_obs=S_obs, beta=beta, k=state.k + 1)


def dual_objective(instance: SystemInstance, state: DualState) -> float:
    """Value of the dual function at the prices that produced this state."""
    c = instance.costs
    S, x, mu, beta = state.S, state.x, state.mu, state.beta
    g = np.where(S > 0.0, c.eta * S / (1.0 - S / instance.T), 0.0)
    off = instance.A * (1.0 - x)
    h = c.theta * off * (c.d + c.gamma_cost * off)
    return float(np.sum(g - mu * S) + np.sum(h + instance.A * beta * x))


@dataclass
class ConvergenceReport:
    """Full record of a dual run (centralized or distributed)."""

    alpha: float
    iterations: int
    converged: bool
    cost: np.ndarray            # primal cost W(x, S_obs) per iteration; +inf when infeasible
    dual_obj: np.ndarray
    grad_norm: np.ndarray       # l2 norms of the super-gradients
    best_cost: float
    best_x: np.ndarray
    best_iter: int
    mu: np.ndarray | None = None      # (iterations, n) when trajectories recorded
    x: np.ndarray | None = None
    S: np.ndarray | None = None
    S_obs: np.ndarray | None = None
    R: np.ndarray | None = None       # control-packet receptions (distributed runs)
    overhead: np.ndarray | None = None  # per-step control generation rate
    overhead_total: float = 0.0

    @property
    def best_dual(self) -> float:
        finite = self.dual_obj[np.isfinite(self.dual_obj)]
        return float(finite.max()) if len(finite) else -math.inf

    @property
    def duality_gap(self) -> float:
        return self.best_cost - self.best_dual


class RunRecorder:
    """Shared per-iteration bookkeeping for the dual and distributed loops.

    Both loops must report identical numbers for identical iterates, so the
    cost/objective/stopping logic lives in exactly one place.  Sweeps can
    skip the per-iteration dual objective (``with_dual_obj=False``); the
    report's dual_obj column is then NaN.
    """

    def __init__(self, instance: SystemInstance, max_iters: int,
                 record_trajectory: bool = True, with_dual_obj: bool = True):
        self.instance = instance
        self.record_trajectory = record_trajectory
        self.with_dual_obj = with_dual_obj
        n = instance.n
        self.cost = np.empty(max_iters)
        self.dual_obj = np.full(max_iters, math.nan)
        self.grad_norm = np.empty(max_iters)
        if record_trajectory:
            self.mu = np.empty((max_iters, n))
            self.x = np.empty((max_iters, n))
            self.S = np.empty((max_iters, n))
            self.S_obs = np.empty((max_iters, n))
        self.k = 0
        self.best_cost = math.inf
        self.best_x = np.zeros(n)
        self.best_iter = -1
        self._best_hist = np.empty(max_iters)

    def _primal_cost(self, x: np.ndarray, S: np.ndarray) -> float:
        # same expressions as costs.total_cost, minus re-validation
        inst = self.instance
        if (S >= inst.T).any():
            return math.inf
        c = inst.costs
        proxy = float(np.sum(c.eta * S / (1.0 - S / inst.T)))
        off = inst.A * (1.0 - x)
        return proxy + float(np.sum(c.theta * off * (c.d + c.gamma_cost * off)))

    def log(self, state: DualState) -> None:
        k = self.k
        w = self._primal_cost(state.x, state.S_obs)
        self.cost[k] = w
        if self.with_dual_obj:
            self.dual_obj[k] = dual_objective(self.instance, state)
        self.grad_norm[k] = float(np.linalg.norm(state.S_obs - state.S))
        if self.record_trajectory:
            self.mu[k] = state.mu
            self.x[k] = state.x
            self.S[k] = state.S
            self.S_obs[k] = state.S_obs
        if w < self.best_cost:
            self.best_cost = w
            self.best_x = state.x.copy()
            self.best_iter = k
        self._best_hist[k] = self.best_cost
        self.k = k + 1

    def should_stop(self, stop_tol: float) -> bool:
        k = self.k
        if stop_tol <= 0 or k < 1:
            return False
        if self.grad_norm[k - 1] == 0.0:
            # exact stationary point: the prices can never move again
            return True
        if k < STOP_WINDOW + 1:
            return False
        old = self._best_hist[k - 1 - STOP_WINDOW]
        new = self._best_hist[k - 1]
        return math.isfinite(old) and math.isfinite(new) and old - new < stop_tol

    def finish(self, alpha: float, converged: bool) -> ConvergenceReport:
        k = self.k
        return ConvergenceReport(
            alpha=alpha,
            iterations=k,
            converged=converged,
            cost=self.cost[:k].copy(),
            dual_obj=self.dual_obj[:k].copy(),
            grad_norm=self.grad_norm[:k].copy(),
            best_cost=self.best_cost,
            best_x=self.best_x,
            best_iter=self.best_iter,
            mu=self.mu[:k].copy() if self.record_trajectory else None,
            x=self.x[:k].copy() if self.record_trajectory else None,
            S=self.S[:k].copy() if self.record_trajectory else None,
            S_obs=self.S_obs[:k].copy() if self.record_trajectory else None,
        )


def run_dual(instance: SystemInstance, policy: StepSizePolicy,
             max_iters: int = 20000, stop_tol: float = 0.0,
             record_trajectory: bool = True,
             with_dual_obj: bool = True) -> ConvergenceReport:
    """Run the centralized dual iteration from cold-start prices.

    Stops at ``max_iters`` or once the running best primal cost improves by
    less than ``stop_tol`` over a 100-iteration window (pass 0 to disable).
    """
    rec = RunRecorder(instance, max_iters, record_trajectory, with_dual_obj)
    state = DualState.cold_start(instance.n)
    converged = False
    for _ in range(max_iters):
        state = dual_step(state, policy.alpha, instance)
        rec.log(state)
        if rec.should_stop(stop_tol):
            converged = True
            break
    return rec.finish(policy.alpha, converged)


# --- centralized reference solver ------------------------------------------

_GRID_POINTS = {1: 2049, 2: 101, 3: 33, 4: 17}


def _cost_on_points(instance: SystemInstance, X: np.ndarray) -> np.ndarray:
    """Vectorized W(x, Bx) over rows of X."""
    B = routing_matrix(instance.C, instance.A)
    c = instance.costs
    S = X @ B.T
    feasible = (S < instance.T).all(axis=1)
    w = np.full(X.shape[0], math.inf)
    if feasible.any():
        Sf = S[feasible]
        Xf = X[feasible]
        g = np.sum(c.eta * Sf / (1.0 - Sf / instance.T), axis=1)
        off = instance.A * (1.0 - Xf)
        h = np.sum(c.theta * off * (c.d + c.gamma_cost * off), axis=1)
        w[feasible] = g + h
    return w


def _grid_optimum(instance: SystemInstance, tol: float) -> tuple[np.ndarray, float]:
    """Refining grid search; final per-axis resolution <= tol.

    At the optimum the load constraint is tight, so searching over x with
    S = Bx is exact.  The objective is strictly convex, so re-centering a
    shrinking box (two-cell margin) around the incumbent keeps the true
    minimizer inside the box.  Ties break toward lexicographically smallest x.
    """
    n = instance.n
    pts = _GRID_POINTS.get(n, 9)
    lo = np.zeros(n)
    hi = np.ones(n)
    while True:
        axes = [np.linspace(lo[i], hi[i], pts) for i in range(n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        X = np.stack([m.ravel() for m in mesh], axis=1)
        w = _cost_on_points(instance, X)
        best = int(np.argmin(w))
        if not math.isfinite(w[best]):
            raise InfeasibleEverywhere("no feasible grid point found")
        x_best = X[best]
        spacing = (hi - lo) / (pts - 1)
        if spacing.max() <= tol:
            return x_best, float(w[best])
        lo = np.clip(x_best - 2.0 * spacing, 0.0, 1.0)
        hi = np.clip(x_best + 2.0 * spacing, 0.0, 1.0)


def _pgd_optimum(instance: SystemInstance, tol: float,
                 max_iters: int = 5000) -> tuple[np.ndarray, float]:
    """Projected gradient descent on W(x, Bx) with diminishing steps."""
    n = instance.n
    B = routing_matrix(instance.C, instance.A)
    c = instance.costs
    T = instance.T

    def cost_and_grad(x):
        S = B @ x
        if (S >= T).any():
            return math.inf, None
        g = float(np.sum(c.eta * S / (1.0 - S / T)))
        off = instance.A * (1.0 - x)
        h = float(np.sum(c.theta * off * (c.d + c.gamma_cost * off)))
        g_prime = c.eta * T ** 2 / (T - S) ** 2
        h_prime = -c.theta * instance.A * (c.d + 2.0 * c.gamma_cost * off)
        return g + h, B.T @ g_prime + h_prime

    x = np.zeros(n)
    w, grad = cost_and_grad(x)
    best_x, best_w = x.copy(), w
    scale = max(1.0, float(np.abs(grad).max()))
    for t in range(1, max_iters + 1):
        step = 1.0 / (scale * math.sqrt(t))
        while step > 1e-14:
            cand = np.clip(x - step * grad, 0.0, 1.0)
            w_cand, grad_cand = cost_and_grad(cand)
            if math.isfinite(w_cand):
                break
            step *= 0.5
        else:
            break
        x, w, grad = cand, w_cand, grad_cand
        if w < best_w:
            best_w, best_x = w, x.copy()
        if step * float(np.abs(grad).max()) < tol * 1e-2:
            break
    return best_x, best_w


def reference_optimum(instance: SystemInstance, tol: float = 1e-3,
                      mode: str = "auto") -> tuple[np.ndarray, float]:
    """Ground-truth optimum of the routing problem.

    ``grid`` refines an exhaustive lattice down to per-axis resolution
    ``tol`` (small N); ``pgd`` runs projected gradient descent (any N);
    ``auto`` picks by dimension.
    """
    if mode == "auto":
        mode = "grid" if instance.n <= 4 else "pgd"
    if mode == "grid":
        if instance.n > 4:
            raise DimensionMismatch("grid mode supports at most 4 nodes")
        return _grid_optimum(instance, tol)
    if mode == "pgd":
        return _pgd_optimum(instance, tol)
    raise ValueError(f"unknown mode {mode!r}")
