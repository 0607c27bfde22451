"""Shared fixtures: the two worked examples and a random stable-instance generator."""

import sys

import numpy as np
import pytest

from structlqr import CostWeights, ExcitationCovariance, StateSpaceModel, ZeroPattern
from structlqr.lti import stability_margin

SQRT2 = np.sqrt(2.0)

A1 = np.array([[0.0, 1.0], [-1.0, -SQRT2]])
B1 = np.array([[0.0], [1.0]])
A2 = np.array([[0.0, 1.0, 0.0, 0.0], [9.8, 0.0, -9.8, 1.0], [0.0, 0.0, 0.0, 1.0], [-9.8, 0.0, 29.4, 0.0]])
B2 = np.array([[0.0, 0.0], [1.0, -2.0], [0.0, 0.0], [-2.0, 5.0]])
K0_EX2 = np.array([[-50.0, -20.0, 0.0, 0.0], [0.0, 0.0, -20.0, -6.0]])


def ex1_cost(k2):
    """Closed-form cost of Example 1 at K = [0, k2] under the unit impulse."""
    return (2.0 + 0.1 * k2**2) / (2.0 * (SQRT2 - k2))


@pytest.fixture(scope="session")
def ex1():
    model = StateSpaceModel(A1, B1)
    return {
        "model": model,
        "weights": CostWeights(np.eye(2), [[0.1]]),
        "pattern": ZeroPattern.from_one_based((1, 2), [[1, 1]]),
        "k0": np.zeros((1, 2)),
        "exc": ExcitationCovariance.impulse(model),
    }


@pytest.fixture(scope="session")
def ex2():
    model = StateSpaceModel(A2, B2)
    return {
        "model": model,
        "weights": CostWeights(np.diag([1.0, 0.0, 1.0, 0.0]), np.eye(2)),
        "pattern": ZeroPattern.from_one_based((2, 4), [[1, 3], [1, 4], [2, 1], [2, 2]]),
        "k0": K0_EX2.copy(),
        "exc": ExcitationCovariance.impulse(model),
    }


def random_stable_instance(rng, n, m, min_margin=0.5, max_margin=2.0, gain_scale=0.3):
    """Random (model, diagonal weights, gain) whose closed loop has margin in [-max, -min].

    A is shifted so its rightmost eigenvalue sits at ``-U(min, max)``; K is
    a small random gain, resampled until the closed loop keeps the margin.
    """
    while True:
        a = rng.normal(size=(n, n))
        a -= (stability_margin(a) + rng.uniform(min_margin, max_margin)) * np.eye(n)
        b = rng.normal(size=(n, m))
        k = gain_scale * rng.normal(size=(m, n))
        margin = stability_margin(a + b @ k)
        if -4.0 <= margin <= -min_margin:
            break
    weights = CostWeights(np.diag(rng.uniform(0.5, 2.0, n)), np.diag(rng.uniform(0.5, 2.0, m)))
    return StateSpaceModel(a, b), weights, k, margin


def horizon_for(margin, cap=60.0):
    return min(30.0 / abs(margin), cap)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
