import numpy as np
import pytest

import netrisk as nr


@pytest.fixture(scope="session")
def params1():
    return nr.SirParams(
        n=1, beta=np.array([2.0]), gamma=np.array([1.0]), lam=0.5,
        u_min=0.5, prev_levels=((1.0,), (2.0,)), h=1.0,
    )


@pytest.fixture(scope="session")
def params2():
    return nr.SirParams(
        n=2, beta=np.array([1.8, 1.2]), gamma=np.array([0.6, 0.9]), lam=0.5,
        u_min=0.6, prev_levels=((1.0, 1.0), (2.0, 2.0)), h=1.0,
    )


@pytest.fixture(scope="session")
def claims2():
    return nr.ClaimLaw(np.array([0.5, 1.0]), np.array([0.5, 0.5]))


@pytest.fixture(scope="session")
def trunc():
    return nr.Truncation(-2.0, 2.0, 0.8)


@pytest.fixture(scope="session")
def dyn1(params1, claims2, trunc):
    return nr.sir_dynamics(params1, claims2, trunc, n_u=3)


@pytest.fixture(scope="session")
def dyn2(params2, claims2, trunc):
    return nr.sir_dynamics(params2, claims2, trunc, n_u=3)


def random_simplex_states(n_edges, n_samples, seed, x_range=(-1.5, 1.5)):
    """Random states with (s_j, i_j) uniform over the unit simplex per edge."""
    rng = np.random.default_rng(seed)
    s = rng.random((n_samples, n_edges))
    i = (1.0 - s) * rng.random((n_samples, n_edges))
    x = rng.uniform(*x_range, size=(n_samples, 1))
    return np.concatenate([s, i, x], axis=1)
