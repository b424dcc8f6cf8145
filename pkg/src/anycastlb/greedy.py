"""The greedy DNS load-shedding heuristic as a continuous dynamical system.

Each node nudges its local-routing probability x_i against its proxy's
overload S_i - T_i, damped by R(x) = x(1-x) so trajectories never leave
the unit hypercube:

    dx_i/dt = -beta_sens * x_i*(1-x_i) * (S(x) - T)_i,    S(x) = B x.

This module integrates the dynamics, locates and classifies fixed
points through the analytic Jacobian, checks the arrival-rate polytope
that rules out locally uncontrollable overload, and implements the
two-node controllability classification.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadInitialPoint,
    BadInterval,
    BoundaryTouched,
    DimensionMismatch,
    InvalidInstance,
    NotAFixedPoint,
    NotConverged,
)
from .model import SystemInstance, routing_matrix

STABLE = "stable"
UNSTABLE = "unstable"
MARGINAL = "marginal"

CONTROLLABLE_ALL = "controllable-for-all-arrivals"
CONTROLLABLE_SUFFICIENT = "controllable-sufficient"
INDETERMINATE = "indeterminate"

_EIG_MARGIN = 1e-9


@dataclass(frozen=True)
class OdeConfig:
    beta_sens: float = 1.0
    dt: float = 0.01
    horizon: float = 1e4
    steady_tol: float = 1e-8
    clamp_eps: float = 1e-12
    record_every: int = 1

    def __post_init__(self):
        if self.beta_sens <= 0 or self.dt <= 0 or self.horizon <= 0:
            raise InvalidInstance("beta_sens, dt and horizon must be positive")
        if self.steady_tol <= 0:
            raise InvalidInstance("steady_tol must be positive")
        if not 0.0 < self.clamp_eps < 1e-6:
            raise InvalidInstance("clamp_eps must lie in (0, 1e-6)")
        if self.record_every < 1:
            raise InvalidInstance("record_every must be at least 1")


@dataclass
class Trajectory:
    t: np.ndarray           # sample times
    x: np.ndarray           # (samples, n) controls
    S: np.ndarray           # (samples, n) proxy loads
    steady: bool            # reached the steady-state tolerance before horizon
    residual: float         # final ||dx/dt||_inf
    config: OdeConfig | None = None


def vector_field(instance: SystemInstance, x: np.ndarray,
                 beta_sens: float = 1.0) -> np.ndarray:
    """Right-hand side of the dynamics at a point of the hypercube."""
    x = np.asarray(x, dtype=float)
    if x.shape != (instance.n,):
        raise DimensionMismatch(f"expected {instance.n} components, got {x.shape}")
    B = routing_matrix(instance.C, instance.A)
    return -beta_sens * x * (1.0 - x) * (B @ x - instance.T)


def jacobian(instance: SystemInstance, x: np.ndarray,
             beta_sens: float = 1.0) -> np.ndarray:
    """Analytic Jacobian of the vector field.

    Off-diagonal (i, j): -x_i(1-x_i)B_ij; diagonal adds the boundary term
    (1-2x_i)(S_i - T_i).
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (instance.n,):
        raise DimensionMismatch(f"expected {instance.n} components, got {x.shape}")
    B = routing_matrix(instance.C, instance.A)
    S = B @ x
    damp = x * (1.0 - x)
    J = -beta_sens * (damp[:, None] * B)
    idx = np.arange(instance.n)
    J[idx, idx] = -beta_sens * (damp * np.diag(B) + (1.0 - 2.0 * x) * (S - instance.T))
    return J


def integrate(instance: SystemInstance, config: OdeConfig, x0: np.ndarray,
              arrivals=None) -> Trajectory:
    """Integrate the dynamics with classical fixed-step RK4.

    ``x0`` must be strictly interior.  After every step, components pushed
    past [clamp_eps, 1-clamp_eps] by discretization overshoot are clamped
    back to that band.  Stops at the horizon or, for constant arrivals, once
    ||dx/dt||_inf drops below the steady-state tolerance.  ``arrivals`` may
    be a callable t -> arrival vector for periodically-forced runs (steady
    detection is then disabled).
    """
    x0 = np.asarray(x0, dtype=float)
    n = instance.n
    if x0.shape != (n,):
        raise DimensionMismatch(f"x0: expected {n} components, got {x0.shape}")
    if ((x0 <= 0.0) | (x0 >= 1.0)).any():
        raise BadInitialPoint(f"x0 must be strictly interior, got {x0}")

    bs = config.beta_sens
    T = instance.T
    Ct = instance.C.T
    if arrivals is None:
        B = routing_matrix(instance.C, instance.A)

        def rhs(_t, x):
            return -bs * x * (1.0 - x) * (B @ x - T)

        def loads(_t, x):
            return B @ x
    else:
        def rhs(t, x):
            return -bs * x * (1.0 - x) * (Ct @ (np.asarray(arrivals(t)) * x) - T)

        def loads(t, x):
            return Ct @ (np.asarray(arrivals(t)) * x)

    dt = config.dt
    steps = int(math.ceil(config.horizon / dt))
    cap = steps // config.record_every + 2
    rec_t = np.empty(cap)
    rec_x = np.empty((cap, n))
    rec_s = np.empty((cap, n))

    x = x0.copy()
    t = 0.0
    rec_t[0], rec_x[0], rec_s[0] = t, x, loads(t, x)
    m = 1
    steady = False
    residual = math.inf
    half = 0.5 * dt
    for step in range(steps):
        f1 = rhs(t, x)
        residual = float(np.abs(f1).max())
        if arrivals is None and residual < config.steady_tol:
            steady = True
            break
        k2 = rhs(t + half, x + half * f1)
        k3 = rhs(t + half, x + half * k2)
        k4 = rhs(t + dt, x + dt * k3)
        x = x + (dt / 6.0) * (f1 + 2.0 * (k2 + k3) + k4)
        np.clip(x, config.clamp_eps, 1.0 - config.clamp_eps, out=x)
        t += dt
        if (step + 1) % config.record_every == 0:
            rec_t[m], rec_x[m], rec_s[m] = t, x, loads(t, x)
            m += 1
    if not steady:
        residual = float(np.abs(rhs(t, x)).max())
        if arrivals is None and residual < config.steady_tol:
            steady = True
    if rec_t[m - 1] != t:
        rec_t[m], rec_x[m], rec_s[m] = t, x, loads(t, x)
        m += 1
    return Trajectory(
        t=rec_t[:m].copy(), x=rec_x[:m].copy(), S=rec_s[:m].copy(),
        steady=steady, residual=residual, config=config,
    )


@dataclass
class FixedPointReport:
    x: np.ndarray
    loads: np.ndarray
    residual: float
    eigenvalues: np.ndarray
    classification: str

    def overloaded_at_rest(self, T: np.ndarray, x_tol: float = 1e-9) -> list[int]:
        """Nodes fully offloading yet overloaded at this point."""
        return [int(i) for i in np.where((self.x < x_tol) & (self.loads > T))[0]]


def _eigenvalues(J: np.ndarray) -> np.ndarray:
    n = J.shape[0]
    if n == 1:
        return np.array([complex(J[0, 0])])
    if n == 2:
        tr = J[0, 0] + J[1, 1]
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        disc = tr * tr - 4.0 * det
        if disc >= 0.0:
            root = math.sqrt(disc)
            return np.array([complex((tr + root) / 2.0), complex((tr - root) / 2.0)])
        root = math.sqrt(-disc)
        return np.array([complex(tr / 2.0, root / 2.0), complex(tr / 2.0, -root / 2.0)])
    return np.linalg.eigvals(J)


def classify_fixed_point(instance: SystemInstance, x_bar: np.ndarray,
                         beta_sens: float = 1.0,
                         residual_tol: float = 1e-8) -> FixedPointReport:
    """Linearize at a fixed point and classify it by eigenvalue signs."""
    x_bar = np.asarray(x_bar, dtype=float)
    F = vector_field(instance, x_bar, beta_sens)
    residual = float(np.abs(F).max())
    if residual >= residual_tol:
        raise NotAFixedPoint(f"||F||_inf = {residual:.3e} >= {residual_tol:g} at {x_bar}")
    eigs = _eigenvalues(jacobian(instance, x_bar, beta_sens))
    re = eigs.real
    if (re < -_EIG_MARGIN).all():
        cls = STABLE
    elif (re > _EIG_MARGIN).any():
        cls = UNSTABLE
    else:
        cls = MARGINAL
    B = routing_matrix(instance.C, instance.A)
    return FixedPointReport(
        x=x_bar.copy(), loads=B @ x_bar, residual=residual,
        eigenvalues=eigs, classification=cls,
    )


def stability_polytope_check(instance: SystemInstance) -> np.ndarray:
    """Per-node test of the arrival-rate polytope that rules out
    locally uncontrollable overload: sum_{j != i} C[j][i]*A[j] <= T_i."""
    inflow = instance.C.T @ instance.A - np.diag(instance.C) * instance.A
    return inflow <= instance.T


def detect_uncontrollable_overload(traj: Trajectory, T: np.ndarray,
                                   x_tol: float = 1e-3,
                                   s_tol: float = 1e-6) -> list[int]:
    """Nodes that settled at full offload yet remain overloaded."""
    if not traj.steady:
        raise NotConverged(
            f"trajectory did not reach steady state (residual {traj.residual:.3e})"
        )
    x_f, s_f = traj.x[-1], traj.S[-1]
    return [int(i) for i in np.where((x_f < x_tol) & (s_f > np.asarray(T) + s_tol))[0]]


def orbit_average_load(traj: Trajectory, window: tuple[float, float]) -> np.ndarray:
    """Time-averaged loads over a window of the trajectory (trapezoidal).

    The window must lie inside the sampled range and the controls must stay
    strictly inside the clamping band throughout it.
    """
    t0, t1 = window
    if not (traj.t[0] <= t0 < t1 <= traj.t[-1]):
        raise BadInterval(
            f"window [{t0}, {t1}] outside sampled range [{traj.t[0]}, {traj.t[-1]}]"
        )
    sel = (traj.t >= t0) & (traj.t <= t1)
    if sel.sum() < 2:
        raise BadInterval("window covers fewer than two samples")
    eps = traj.config.clamp_eps if traj.config is not None else 1e-12
    x_sel = traj.x[sel]
    if ((x_sel <= eps) | (x_sel >= 1.0 - eps)).any():
        raise BoundaryTouched("controls leave the open hypercube inside the window")
    t_sel = traj.t[sel]
    span = t_sel[-1] - t_sel[0]
    return np.trapezoid(traj.S[sel], t_sel, axis=0) / span


# --- fixed-point search ------------------------------------------------------

def _newton_refine(instance: SystemInstance, x: np.ndarray, beta_sens: float,
                   iters: int = 60) -> np.ndarray:
    for _ in range(iters):
        F = vector_field(instance, x, beta_sens)
        if np.abs(F).max() < 1e-13:
            break
        J = jacobian(instance, x, beta_sens)
        try:
            delta = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            delta, *_ = np.linalg.lstsq(J, F, rcond=None)
        x = np.clip(x - delta, 0.0, 1.0)
    return x


def find_fixed_points(instance: SystemInstance, beta_sens: float = 1.0,
                      extra_seeds=None,
                      residual_tol: float = 1e-8) -> list[FixedPointReport]:
    """Enumerate and classify fixed points.

    Candidates: every hypercube vertex (up to 10 nodes), the two-node
    mixed boundary solutions (x_i = 0 with the other load at threshold),
    the interior solution of Bx = T when it exists, and Newton-refined
    extra seeds (typically integration endpoints).
    """
    n = instance.n
    B = routing_matrix(instance.C, instance.A)
    candidates: list[np.ndarray] = []
    if n <= 10:
        for bits in itertools.product((0.0, 1.0), repeat=n):
            candidates.append(np.array(bits))
    if n == 2:
        # mixed faces: one control pinned at a vertex value, the other
        # balancing its node exactly at threshold
        for i, j in ((0, 1), (1, 0)):
            for pinned in (0.0, 1.0):
                if B[j, j] > 0.0:
                    xj = (instance.T[j] - B[j, i] * pinned) / B[j, j]
                    if 0.0 < xj < 1.0:
                        point = np.empty(2)
                        point[i] = pinned
                        point[j] = xj
                        candidates.append(point)
    try:
        interior = np.linalg.solve(B, instance.T)
        if ((interior > 0.0) & (interior < 1.0)).all():
            candidates.append(interior)
    except np.linalg.LinAlgError:
        pass
    for seed in extra_seeds if extra_seeds is not None else []:
        candidates.append(_newton_refine(instance, np.asarray(seed, float), beta_sens))

    reports: list[FixedPointReport] = []
    seen: set[tuple] = set()
    for cand in candidates:
        key = tuple(np.round(cand, 7))
        if key in seen:
            continue
        seen.add(key)
        try:
            reports.append(classify_fixed_point(instance, cand, beta_sens, residual_tol))
        except NotAFixedPoint:
            continue
    reports.sort(key=lambda r: tuple(r.x))
    return reports


# --- two-node theory ---------------------------------------------------------

@dataclass
class TwoNodeVerdict:
    kind: str                      # one of the module verdict constants
    uncontrollable: bool           # a stable rest point with full-offload overload exists
    fixed_points: list[FixedPointReport] = field(default_factory=list)
    overloaded_nodes: list[int] = field(default_factory=list)


def two_node_classify(alpha: float, beta: float, A, T) -> TwoNodeVerdict:
    """Controllability of the two-node system with self-correlations alpha, beta.

    Both self-correlations above one half guarantee controllability for any
    arrival pair; both below one half are covered by the sufficient arrival
    bounds A_i < T_i/(1 - self-correlation).  Anything else falls back to
    classifying the vertex and mixed boundary fixed points explicitly.
    """
    if not (0.0 <= alpha <= 1.0 and 0.0 <= beta <= 1.0):
        raise InvalidInstance(f"self-correlations must lie in [0, 1], got {alpha}, {beta}")
    A = np.asarray(A, dtype=float)
    T = np.asarray(T, dtype=float)
    if A.shape != (2,) or T.shape != (2,):
        raise DimensionMismatch("two_node_classify expects arrival and capacity pairs")
    if (A <= 0).any() or (T <= 0).any():
        raise InvalidInstance("arrivals and capacities must be positive")

    if alpha > 0.5 and beta > 0.5:
        return TwoNodeVerdict(kind=CONTROLLABLE_ALL, uncontrollable=False)
    if (alpha < 0.5 and beta < 0.5
            and A[0] < T[0] / (1.0 - alpha) and A[1] < T[1] / (1.0 - beta)):
        return TwoNodeVerdict(kind=CONTROLLABLE_SUFFICIENT, uncontrollable=False)

    C = [[alpha, 1.0 - alpha], [1.0 - beta, beta]]
    instance = SystemInstance.build(C, A, T)
    reports = find_fixed_points(instance)
    overloaded: list[int] = []
    uncontrollable = False
    for rep in reports:
        if rep.classification == STABLE:
            nodes = rep.overloaded_at_rest(instance.T)
            if nodes:
                uncontrollable = True
                overloaded.extend(i for i in nodes if i not in overloaded)
    return TwoNodeVerdict(
        kind=INDETERMINATE, uncontrollable=uncontrollable,
        fixed_points=reports, overloaded_nodes=sorted(overloaded),
    )


# --- whole-instance stability report ----------------------------------------

@dataclass
class StabilityVerdict:
    in_polytope: np.ndarray              # per-node polytope membership
    uncontrollably_overloaded: np.ndarray  # per-node flags from integration
    verdict: str                         # "controllable" | "locally-uncontrollable"
    fixed_points: list[FixedPointReport]


def stability_report(instance: SystemInstance, config: OdeConfig | None = None,
                     n_starts: int = 5, seed: int = 0, x_tol: float = 1e-3,
                     s_tol: float = 1e-6) -> StabilityVerdict:
    """Polytope check plus steady states reached from several interior starts."""
    if config is None:
        config = OdeConfig(record_every=50)
    rng = np.random.default_rng(seed)
    n = instance.n
    starts = [np.full(n, 0.5)]
    starts += [rng.uniform(0.05, 0.95, size=n) for _ in range(max(0, n_starts - 1))]
    flags = np.zeros(n, dtype=bool)
    endpoints = []
    for x0 in starts:
        traj = integrate(instance, config, x0)
        endpoints.append(traj.x[-1])
        if traj.steady:
            for i in detect_uncontrollable_overload(traj, instance.T, x_tol, s_tol):
                flags[i] = True
    reports = find_fixed_points(instance, config.beta_sens, extra_seeds=endpoints)
    verdict = "locally-uncontrollable" if flags.any() else "controllable"
    return StabilityVerdict(
        in_polytope=stability_polytope_check(instance),
        uncontrollably_overloaded=flags,
        verdict=verdict,
        fixed_points=reports,
    )
