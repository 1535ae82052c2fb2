#!/usr/bin/env python3
"""Shared fixtures for the simulator tests."""

import json

import numpy as np
import pytest
from loguru import logger

from quadratic_core import DiagonalProblem

TWO_DIRECTION_GAMMA = (2.0 / 3.0, 1.0 / 3.0)
TWO_DIRECTION_LAMBDA = (0.5, 0.5)


@pytest.fixture
def two_direction_problem():
    """Two sample directions, e_1 drawn twice and e_2 once, beta* = (1000, 1000)."""
    return DiagonalProblem(gamma=TWO_DIRECTION_GAMMA, lam=TWO_DIRECTION_LAMBDA, ground_truth=(1000.0, 1000.0))


@pytest.fixture
def claim_delta0():
    return np.array([-1000.0, -1000.0])


@pytest.fixture
def claim_instance():
    return {
        "gamma": list(TWO_DIRECTION_GAMMA),
        "lambda": list(TWO_DIRECTION_LAMBDA),
        "delta0": [-1000.0, -1000.0],
        "k": 2,
        "alpha": 0.01,
        "epsilon": 0.01,
        "K": 10,
    }


@pytest.fixture
def write_instance(tmp_path):
    """Write an instance dict to a JSON file and return its path as a string."""

    def _write(payload, name="instance.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture
def log_messages():
    """Collect loguru records at WARNING and above."""
    messages = []
    handler_id = logger.add(lambda message: messages.append(message.record["message"]), level="WARNING")
    yield messages
    logger.remove(handler_id)
