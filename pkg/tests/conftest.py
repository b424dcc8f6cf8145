import numpy as np
import pytest

from anycastlb import SystemInstance


@pytest.fixture
def two_node_demo():
    """Two-node instance with poor self-correlation at node 0.

    Node 0 can never overload itself (max own-influenced load 0.6 < 0.7) and
    spills 90% of its routed traffic onto node 1.
    """
    return demo_instance()


def demo_instance() -> SystemInstance:
    return SystemInstance.build(
        [[0.1, 0.9], [0.5, 0.5]], (1.0, 1.0), (0.7, 0.7), d=(0.5, 0.5))


def random_stochastic(rng: np.random.Generator, n: int) -> np.ndarray:
    """Strictly positive row-stochastic matrix (Dirichlet rows)."""
    return rng.dirichlet(np.ones(n), size=n)


def random_instance(rng: np.random.Generator, n: int, a_lo: float = 0.2,
                    a_hi: float = 2.0, capacity: float = 0.7) -> SystemInstance:
    """Random instance with the standard cost parameters."""
    return SystemInstance.build(
        random_stochastic(rng, n),
        rng.uniform(a_lo, a_hi, size=n),
        capacity,
        eta=1.0, theta=10.0, d=rng.uniform(0.0, 1.0, size=n), gamma_cost=1.0,
    )
