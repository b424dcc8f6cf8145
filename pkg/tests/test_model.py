"""System-model tests: correlation validation, the load map, partitions."""

import json

import numpy as np
import pytest

from conftest import random_instance

from anycastlb import (
    SystemInstance,
    effective_self_correlation,
    instance_from_dict,
    load_instance,
    load_map,
    load_matrix,
    validate_correlation,
)
from anycastlb.errors import (
    BadPartition,
    DimensionMismatch,
    InvalidInstance,
    NegativeEntry,
    NonSquareMatrix,
    RowSumViolation,
)


# --- validate_correlation ----------------------------------------------------

def test_validate_accepts_demo_matrix():
    C = validate_correlation([[0.1, 0.9], [0.5, 0.5]], tol=1e-9)
    assert C.shape == (2, 2)


def test_validate_accepts_identity():
    for n in (1, 3, 7):
        C = validate_correlation(np.eye(n))
        assert np.array_equal(C, np.eye(n))


def test_validate_rejects_bad_row_sum():
    with pytest.raises(RowSumViolation) as exc:
        validate_correlation([[0.6, 0.5], [0.3, 0.7]], tol=1e-9)
    assert exc.value.row == 0
    assert abs(exc.value.total - 1.1) < 1e-12


def test_validate_rejects_non_square():
    with pytest.raises(NonSquareMatrix):
        validate_correlation([[0.5, 0.5]])
    with pytest.raises(NonSquareMatrix):
        validate_correlation(np.zeros((0, 0)))


def test_validate_rejects_negative_entry():
    with pytest.raises(NegativeEntry) as exc:
        validate_correlation([[1.2, -0.2], [0.5, 0.5]])
    assert (exc.value.i, exc.value.j) == (0, 1)


def test_validate_rejects_nan():
    with pytest.raises(RowSumViolation):
        validate_correlation([[np.nan, 0.5], [0.5, 0.5]])


def test_validate_tolerance_band():
    validate_correlation([[0.5 + 4e-10, 0.5], [0.5, 0.5]], tol=1e-9)
    with pytest.raises(RowSumViolation):
        validate_correlation([[0.5 + 4e-9, 0.5], [0.5, 0.5]], tol=1e-9)


def test_validated_matrix_is_frozen():
    C = validate_correlation(np.eye(2))
    with pytest.raises(ValueError):
        C[0, 0] = 0.5


# --- load_map ---------------------------------------------------------------

def test_load_map_demo_full_routing(two_node_demo):
    S = load_map(two_node_demo.C, two_node_demo.A, np.ones(2))
    assert np.allclose(S, [0.6, 1.4], atol=1e-15)


def test_load_map_zero_control():
    rng = np.random.default_rng(1)
    inst = random_instance(rng, 4)
    assert np.array_equal(inst.loads(np.zeros(4)), np.zeros(4))


def test_load_map_identity_decouples():
    S = load_map(np.eye(2), np.array([2.0, 3.0]), np.array([0.5, 1.0]))
    assert np.allclose(S, [1.0, 3.0], atol=1e-15)


def test_load_map_dimension_mismatch(two_node_demo):
    with pytest.raises(DimensionMismatch):
        load_map(two_node_demo.C, two_node_demo.A, np.ones(3))


def test_load_conservation():
    # total proxy load equals total locally-routed traffic
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(1, 8))
        inst = random_instance(rng, n)
        x = rng.uniform(0, 1, size=n)
        S = inst.loads(x)
        assert abs(S.sum() - (inst.A * x).sum()) < 1e-12 * max(1.0, S.sum())


def test_load_map_monotone_in_controls():
    rng = np.random.default_rng(3)
    for _ in range(30):
        n = int(rng.integers(2, 7))
        inst = random_instance(rng, n)
        x = rng.uniform(0, 0.8, size=n)
        j = int(rng.integers(n))
        bumped = x.copy()
        bumped[j] += 0.1
        assert (inst.loads(bumped) >= inst.loads(x) - 1e-15).all()


def test_load_map_linear_in_controls():
    rng = np.random.default_rng(4)
    for _ in range(30):
        n = int(rng.integers(1, 7))
        inst = random_instance(rng, n)
        x, y = rng.uniform(0, 1, size=n), rng.uniform(0, 1, size=n)
        lam = float(rng.uniform())
        mixed = inst.loads(lam * x + (1 - lam) * y)
        combo = lam * inst.loads(x) + (1 - lam) * inst.loads(y)
        assert np.allclose(mixed, combo, atol=1e-12)


# --- effective_self_correlation ----------------------------------------------

def test_self_correlation_singletons(two_node_demo):
    assert effective_self_correlation(two_node_demo.C, {0}, {1}) == (0.1, 0.5)


def test_self_correlation_identity_blocks():
    alpha, beta = effective_self_correlation(np.eye(4), {0, 1}, {2, 3})
    assert (alpha, beta) == (1.0, 1.0)


def test_self_correlation_four_node_blocks():
    C = np.array([
        [0.4, 0.3, 0.2, 0.1],
        [0.3, 0.4, 0.2, 0.1],
        [0.1, 0.1, 0.5, 0.3],
        [0.1, 0.1, 0.3, 0.5],
    ])
    g1, g2 = [0, 1], [2, 3]
    # independent oracle: accumulate the blocks entry by entry
    a = sum(C[i][j] for i in g1 for j in g1) / len(g1)
    b = sum(C[i][j] for i in g2 for j in g2) / len(g2)
    got = effective_self_correlation(C, g1, g2)
    assert got == pytest.approx((a, b), abs=1e-15)
    assert got == pytest.approx((0.7, 0.8), abs=1e-12)


def test_self_correlation_bad_partitions():
    C = np.eye(3)
    with pytest.raises(BadPartition):
        effective_self_correlation(C, {0, 1}, {1, 2})
    with pytest.raises(BadPartition):
        effective_self_correlation(C, {0}, {1})
    with pytest.raises(BadPartition):
        effective_self_correlation(C, set(), {0, 1, 2})


# --- SystemInstance ----------------------------------------------------------

def test_instance_broadcasts_scalars():
    inst = SystemInstance.build(np.eye(3), 1.0, 0.7, d=0.5)
    assert np.array_equal(inst.A, np.ones(3))
    assert np.array_equal(inst.T, np.full(3, 0.7))
    assert np.array_equal(inst.costs.d, np.full(3, 0.5))


def test_instance_rejects_bad_data():
    with pytest.raises(InvalidInstance):
        SystemInstance.build(np.eye(2), (-1.0, 1.0), 0.7)
    with pytest.raises(InvalidInstance):
        SystemInstance.build(np.eye(2), 1.0, 0.0)
    with pytest.raises(InvalidInstance):
        SystemInstance.build(np.eye(2), 1.0, 0.7, eta=0.0)
    with pytest.raises(DimensionMismatch):
        SystemInstance.build(np.eye(2), (1.0, 1.0, 1.0), 0.7)


def test_instance_arrays_immutable():
    inst = SystemInstance.build(np.eye(2), 1.0, 0.7)
    for arr in (inst.C, inst.A, inst.T, inst.costs.eta):
        with pytest.raises(ValueError):
            arr[0] = 9.9


# --- file formats ------------------------------------------------------------

def test_matrix_file_roundtrip(tmp_path):
    path = tmp_path / "corr.txt"
    path.write_text("0.1 0.9\n0.5 0.5\n")
    C = load_matrix(path)
    assert np.allclose(C, [[0.1, 0.9], [0.5, 0.5]])


def test_matrix_file_single_node(tmp_path):
    path = tmp_path / "one.txt"
    path.write_text("1.0\n")
    assert load_matrix(path).shape == (1, 1)


def test_matrix_file_invalid(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("0.6 0.5\n0.3 0.7\n")
    with pytest.raises(RowSumViolation):
        load_matrix(path)
    with pytest.raises(InvalidInstance):
        load_matrix(tmp_path / "missing.txt")


def test_instance_json_inline(tmp_path):
    spec = {
        "correlation": [[0.1, 0.9], [0.5, 0.5]],
        "arrivals": [1.0, 1.0],
        "capacities": 0.7,
        "costs": {"eta": 1.0, "theta": 10.0, "d": [0.5, 0.5], "gamma_cost": 1.0},
    }
    path = tmp_path / "inst.json"
    path.write_text(json.dumps(spec))
    inst = load_instance(path)
    assert inst.n == 2
    assert np.allclose(inst.loads(np.ones(2)), [0.6, 1.4])


def test_instance_json_matrix_path(tmp_path):
    (tmp_path / "corr.txt").write_text("1.0 0.0\n0.0 1.0\n")
    spec = {"correlation": "corr.txt", "arrivals": 1.0, "capacities": 0.7}
    path = tmp_path / "inst.json"
    path.write_text(json.dumps(spec))
    inst = load_instance(path)
    assert np.array_equal(inst.C, np.eye(2))


def test_instance_json_errors(tmp_path):
    with pytest.raises(InvalidInstance):
        instance_from_dict({"arrivals": [1.0]})
    with pytest.raises(InvalidInstance):
        instance_from_dict({
            "correlation": [[1.0]], "arrivals": [1.0], "capacities": [0.7],
            "costs": {"bogus": 1},
        })
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InvalidInstance):
        load_instance(bad)
