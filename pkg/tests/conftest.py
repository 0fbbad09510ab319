"""Shared fixtures: deterministic instances and a session-wide oracle cache."""

from __future__ import annotations

import numpy as np
import pytest

from otmatch.measures import DiscreteMeasure, Instance, cost_matrix
from otmatch.solvers import oracle_solve
from otmatch.verify import random_instance

# pass/fail lines registered by the acceptance tests; echoed in the terminal
# summary so they survive output capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def zero_cost_instance(n: int = 4, m: int = 5, seed: int = 0) -> Instance:
    rng = np.random.default_rng(seed)
    mu = DiscreteMeasure(points=rng.normal(size=(n, 2)), weights=rng.dirichlet(np.ones(n)))
    nu = DiscreteMeasure(points=rng.normal(size=(m, 2)), weights=rng.dirichlet(np.ones(m)))
    return Instance(mu=mu, nu=nu, cost=np.zeros((n, m)), epsilon=1.0)


def single_cell_instance(cost: float = 2.0, epsilon: float = 1.0) -> Instance:
    mu = DiscreteMeasure(points=np.zeros((1, 1)), weights=np.ones(1))
    nu = DiscreteMeasure(points=np.zeros((1, 1)), weights=np.ones(1))
    return Instance(mu=mu, nu=nu, cost=np.array([[cost]]), epsilon=epsilon)


@pytest.fixture(scope="session")
def oracle_cache():
    """Memoized oracle potentials keyed by caller-chosen labels."""
    cache: dict[str, np.ndarray] = {}

    def get(label: str, inst: Instance, tol: float = 1e-12) -> np.ndarray:
        if label not in cache:
            cache[label] = oracle_solve(inst, tol=tol)
        return cache[label]

    return get


@pytest.fixture()
def small_instance() -> Instance:
    return random_instance(np.random.default_rng(123), 3, 4, 0.7)


@pytest.fixture()
def medium_instance() -> Instance:
    return random_instance(np.random.default_rng(7), 8, 10, 0.5)
