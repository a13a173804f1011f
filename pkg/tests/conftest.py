from __future__ import annotations

import numpy as np
import pytest

from wctransfer.core import DiscreteDistribution, MetricVector

ACCEPTANCE_LINES: list[str] = []


def make_dist(probs, decimals: int = 0) -> DiscreteDistribution:
    probs = np.asarray(probs, dtype=float)
    return DiscreteDistribution(decimals, np.arange(probs.shape[0]), probs)


def random_instance(rng: np.random.Generator, n: int):
    q = make_dist(rng.dirichlet(np.ones(n)))
    psi = MetricVector(rng.normal(size=n))
    return q, psi


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
