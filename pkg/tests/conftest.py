import numpy as np
import pytest
from scipy.linalg import expm

from jumpbsde import MarkovModel, TerminalCondition
from jumpbsde import drivers


@pytest.fixture(scope="session")
def two_state():
    return MarkovModel(states=(0, 1), rate_matrix=[[0.0, 1.0], [1.0, 0.0]], horizon=1.0)


@pytest.fixture(scope="session")
def two_state_half():
    return MarkovModel(states=(0, 1), rate_matrix=[[0.0, 1.0], [1.0, 0.0]], horizon=0.5)


@pytest.fixture(scope="session")
def ring3():
    rates = [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]
    return MarkovModel(states=("a", "b", "c"), rate_matrix=rates, horizon=1.0)


@pytest.fixture(scope="session")
def frozen_model():
    return MarkovModel(states=(0, 1), rate_matrix=[[0.0, 0.0], [0.0, 0.0]], horizon=1.0)


@pytest.fixture(scope="session")
def indicator_terminal():
    return TerminalCondition(np.array([1.0, 0.0]))


def generator_matrix(model):
    q = np.array(model.rate_matrix, dtype=float)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


def linear_closed_form(model, a, c, terminal, grid):
    """u(t, x) = e^{a(T-t)} E[h(X_T) | X_t = x] + (c/a)(e^{a(T-t)} - 1)."""
    q = generator_matrix(model)
    T = model.horizon
    out = np.empty((grid.size, model.n_states))
    for i, t in enumerate(grid):
        cond = expm(q * (T - t)) @ terminal.values
        decay = np.exp(a * (T - t))
        out[i] = decay * cond + (c / a) * (decay - 1.0)
    return out


# fixtures with a global Lipschitz constant, paired with terminal data
def lipschitz_fixtures():
    return [
        ("zero", drivers.zero(), np.array([0.7, -0.2])),
        ("const", drivers.constant(0.3), np.array([1.0, 0.0])),
        ("linear", drivers.linear(-0.5, 0.2), np.array([1.0, 0.0])),
        ("linear_pos", drivers.linear(0.4, -0.1), np.array([0.5, 1.0])),
        ("discount", drivers.finance_discount(0.05), np.array([1.0, 0.0])),
    ]
