"""Static system model for a two-layer anycast CDN.

A system instance bundles the DNS/proxy correlation matrix C, the
DNS-influenced arrival rates A, the proxy capacities T and the per-node
cost parameters.  ``C[i][j]`` is the probability that a user whose DNS
query was answered at node i lands on node j's proxy, so every row of C
sums to one.  All arrays are frozen after construction; every operation
here is pure.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadPartition,
    DimensionMismatch,
    InvalidInstance,
    NegativeEntry,
    NonSquareMatrix,
    RowSumViolation,
)

ROW_SUM_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def _per_node(value, n: int, name: str) -> np.ndarray:
    """Broadcast a scalar to an n-vector, or validate an n-vector."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise DimensionMismatch(f"{name}: expected {n} entries, got shape {arr.shape}")
    return arr


def validate_correlation(raw, tol: float = ROW_SUM_TOL) -> np.ndarray:
    """Validate a raw correlation matrix and return a frozen copy.

    Checks that the matrix is square, entries are nonnegative and every
    row sums to 1 within ``tol``.
    """
    C = np.asarray(raw, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] < 1:
        raise NonSquareMatrix(f"expected a square matrix, got shape {C.shape}")
    neg = np.argwhere(C < 0.0)
    if neg.size:
        i, j = map(int, neg[0])
        raise NegativeEntry(i, j, float(C[i, j]))
    sums = C.sum(axis=1)
    bad = ~(np.abs(sums - 1.0) <= tol)  # negated so NaN rows fail too
    if bad.any():
        row = int(np.argmax(bad))
        raise RowSumViolation(row, float(sums[row]))
    return _frozen(C)


def load_map(C: np.ndarray, A: np.ndarray, x: np.ndarray) -> np.ndarray:
    """User-load arrival rate at each proxy: S[i] = sum_j C[j][i]*A[j]*x[j]."""
    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float)
    n = C.shape[0]
    if A.shape != (n,) or x.shape != (n,):
        raise DimensionMismatch(
            f"load_map: C is {C.shape}, A is {A.shape}, x is {x.shape}"
        )
    return C.T @ (A * x)


def routing_matrix(C: np.ndarray, A: np.ndarray) -> np.ndarray:
    """The linear map B with S = B x, i.e. B[i][j] = C[j][i]*A[j]."""
    return C.T * np.asarray(A, dtype=float)


def effective_self_correlation(C: np.ndarray, g1, g2) -> tuple[float, float]:
    """Effective self-correlation of a two-set node partition.

    For each group, sums the correlation block restricted to the group and
    divides by the group size.  The partition must cover all nodes exactly
    once.
    """
    n = C.shape[0]
    g1 = sorted(set(int(i) for i in g1))
    g2 = sorted(set(int(i) for i in g2))
    if not g1 or not g2:
        raise BadPartition("both groups must be nonempty")
    if set(g1) & set(g2):
        raise BadPartition(f"groups overlap: {sorted(set(g1) & set(g2))}")
    if set(g1) | set(g2) != set(range(n)):
        raise BadPartition("groups must cover every node exactly once")
    alpha = float(C[np.ix_(g1, g1)].sum() / len(g1))
    beta = float(C[np.ix_(g2, g2)].sum() / len(g2))
    return alpha, beta


@dataclass(frozen=True)
class CostParams:
    """Per-node cost parameters.

    eta        -- proxy queuing-delay weight (> 0)
    theta      -- offload cost weight (> 0)
    d          -- normalized round-trip latency to the data-center (>= 0)
    gamma_cost -- congestion slope of the offload path (> 0)
    """

    eta: np.ndarray
    theta: np.ndarray
    d: np.ndarray
    gamma_cost: np.ndarray

    @classmethod
    def build(cls, n: int, eta=1.0, theta=10.0, d=0.5, gamma_cost=1.0) -> "CostParams":
        eta = _per_node(eta, n, "eta")
        theta = _per_node(theta, n, "theta")
        d = _per_node(d, n, "d")
        gamma_cost = _per_node(gamma_cost, n, "gamma_cost")
        if (eta <= 0).any() or (theta <= 0).any() or (gamma_cost <= 0).any():
            raise InvalidInstance("eta, theta and gamma_cost must be positive")
        if (d < 0).any():
            raise InvalidInstance("d must be nonnegative")
        return cls(_frozen(eta), _frozen(theta), _frozen(d), _frozen(gamma_cost))


@dataclass(frozen=True)
class SystemInstance:
    """Immutable problem data: correlation, arrivals, capacities, costs."""

    C: np.ndarray
    A: np.ndarray
    T: np.ndarray
    costs: CostParams

    @property
    def n(self) -> int:
        return self.C.shape[0]

    @classmethod
    def build(cls, C, A, T, *, eta=1.0, theta=10.0, d=0.5, gamma_cost=1.0,
              tol: float = ROW_SUM_TOL) -> "SystemInstance":
        C = validate_correlation(C, tol)
        n = C.shape[0]
        A = _per_node(A, n, "arrivals")
        T = _per_node(T, n, "capacities")
        if (A < 0).any():
            raise InvalidInstance("arrival rates must be nonnegative")
        if (T <= 0).any():
            raise InvalidInstance("capacities must be positive")
        costs = CostParams.build(n, eta=eta, theta=theta, d=d, gamma_cost=gamma_cost)
        return cls(C, _frozen(A), _frozen(T), costs)

    def loads(self, x: np.ndarray) -> np.ndarray:
        return load_map(self.C, self.A, x)


def load_matrix(path) -> np.ndarray:
    """Read a correlation matrix from text: one row per line, whitespace-separated."""
    try:
        raw = np.loadtxt(path, dtype=float, ndmin=2)
    except (OSError, ValueError) as exc:
        raise InvalidInstance(f"cannot read matrix file {path}: {exc}") from exc
    return validate_correlation(raw)


def instance_from_dict(spec: dict, base_dir: str = ".") -> SystemInstance:
    """Build an instance from its JSON form.

    Keys: ``correlation`` (inline rows or a matrix file path), ``arrivals``,
    ``capacities`` and ``costs`` (object with eta/theta/d/gamma_cost, each
    a per-node array or a scalar).
    """
    try:
        corr = spec["correlation"]
        arrivals = spec["arrivals"]
        capacities = spec["capacities"]
    except KeyError as exc:
        raise InvalidInstance(f"instance config missing key {exc}") from exc
    if isinstance(corr, str):
        C = load_matrix(os.path.join(base_dir, corr))
    else:
        C = validate_correlation(corr)
    costs = spec.get("costs", {})
    unknown = set(costs) - {"eta", "theta", "d", "gamma_cost"}
    if unknown:
        raise InvalidInstance(f"unknown cost parameters: {sorted(unknown)}")
    return SystemInstance.build(
        C, arrivals, capacities,
        eta=costs.get("eta", 1.0),
        theta=costs.get("theta", 10.0),
        d=costs.get("d", 0.5),
        gamma_cost=costs.get("gamma_cost", 1.0),
    )


def load_instance(path) -> SystemInstance:
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except OSError as exc:
        raise InvalidInstance(f"cannot read instance file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInstance(f"{path} is not valid JSON: {exc}") from exc
    return instance_from_dict(spec, base_dir=os.path.dirname(os.path.abspath(path)))
