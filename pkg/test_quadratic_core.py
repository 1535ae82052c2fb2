#!/usr/bin/env python3
"""
Tests for the diagonal train/population loss pair.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from errors import MalformedInputError
from quadratic_core import (
    Dataset,
    DiagonalProblem,
    ResidualState,
    build_problem,
    empirical_covariance,
    full_population_loss,
    good_bad_residuals,
    level_set_extremes,
    population_loss,
    train_loss,
)


@pytest.mark.parametrize("epsilon", [1e-1, 1e-2, 1e-3])
def test_good_bad_table(two_direction_problem, epsilon):
    good = np.array([np.sqrt(1.5 * epsilon), 0.0])
    bad = np.array([0.0, np.sqrt(3.0 * epsilon)])

    assert train_loss(good, two_direction_problem) == pytest.approx(epsilon, rel=1e-12)
    assert population_loss(good, two_direction_problem) == pytest.approx(0.75 * epsilon, rel=1e-12)
    assert train_loss(bad, two_direction_problem) == pytest.approx(epsilon, rel=1e-12)
    assert population_loss(bad, two_direction_problem) == pytest.approx(1.5 * epsilon, rel=1e-12)


def test_good_bad_residuals_match_table(two_direction_problem):
    good, bad = good_bad_residuals(0.01, two_direction_problem)

    assert good.label == "good" and bad.label == "bad"
    assert good.train_loss == pytest.approx(0.01, rel=1e-12)
    assert good.test_loss == pytest.approx(0.0075, rel=1e-12)
    assert bad.test_loss == pytest.approx(0.015, rel=1e-12)
    assert good.state.delta[1] == 0.0 and bad.state.delta[0] == 0.0


def test_losses_accept_states_and_reject_wrong_dimension(two_direction_problem):
    state = ResidualState(delta=[1.0, 2.0])
    assert train_loss(state, two_direction_problem) == pytest.approx(2.0 / 3.0 + 4.0 / 3.0)
    assert population_loss([0.0, 0.0], two_direction_problem) == 0.0
    with pytest.raises(MalformedInputError):
        train_loss([1.0, 2.0, 3.0], two_direction_problem)
    with pytest.raises(ValueError):
        population_loss([1.0], two_direction_problem)


def test_level_set_extremes_two_directions(two_direction_problem):
    extremes = level_set_extremes(0.01, two_direction_problem)
    assert extremes.best == pytest.approx(0.0075)
    assert extremes.worst == pytest.approx(0.015)
    assert (extremes.best_index, extremes.worst_index) == (1, 2)


def test_level_set_extremes_identical_landscapes():
    problem = DiagonalProblem(gamma=[3.0, 2.0, 1.0], lam=[3.0, 2.0, 1.0], ground_truth=[0.0, 0.0, 0.0])
    extremes = level_set_extremes(0.2, problem)
    assert extremes.best == pytest.approx(0.2)
    assert extremes.worst == pytest.approx(0.2)


def test_level_set_ties_resolve_to_lowest_index():
    problem = DiagonalProblem(gamma=[1.0, 1.0], lam=[1.0, 1.0], ground_truth=[0.0, 0.0])
    extremes = level_set_extremes(0.5, problem)
    assert extremes.best_index == 1 and extremes.worst_index == 1


def test_level_set_extremes_reject_non_positive_epsilon(two_direction_problem):
    with pytest.raises(MalformedInputError):
        level_set_extremes(0.0, two_direction_problem)


def _level_set_directions(dim: int) -> np.ndarray:
    """Dense unit directions: a circle for 2-D, a spherical grid for 3-D."""
    if dim == 2:
        theta = np.linspace(0.0, 2.0 * np.pi, 20001)
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    theta, phi = np.meshgrid(np.linspace(0.0, np.pi, 721), np.linspace(0.0, 2.0 * np.pi, 1441))
    theta, phi = theta.ravel(), phi.ravel()
    return np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=1)


def test_level_set_extremes_match_brute_force():
    rng = np.random.default_rng(2024)
    directions = {2: _level_set_directions(2), 3: _level_set_directions(3)}
    for _ in range(50):
        dim = int(rng.integers(2, 4))
        gamma = np.sort(rng.uniform(0.1, 2.0, dim))[::-1]
        lam = rng.uniform(0.1, 2.0, dim)
        epsilon = float(rng.uniform(1e-3, 1e-1))
        problem = DiagonalProblem(gamma=gamma, lam=lam, ground_truth=np.zeros(dim))

        # Scale each direction u onto the level set: delta_i = u_i sqrt(epsilon / gamma_i)
        delta = directions[dim] * np.sqrt(epsilon / gamma)
        sampled = delta**2 @ lam
        extremes = level_set_extremes(epsilon, problem)

        assert extremes.best == pytest.approx(sampled.min(), rel=1e-3)
        assert extremes.worst == pytest.approx(sampled.max(), rel=1e-3)


positive = st.floats(min_value=0.05, max_value=5.0, allow_nan=False, allow_infinity=False)


@st.composite
def problems_and_residuals(draw):
    dim = draw(st.integers(min_value=1, max_value=6))
    gamma = sorted(draw(st.lists(positive, min_size=dim, max_size=dim)), reverse=True)
    lam = draw(st.lists(positive, min_size=dim, max_size=dim))
    delta = draw(
        st.lists(st.floats(min_value=-10.0, max_value=10.0, allow_nan=False), min_size=dim, max_size=dim).filter(
            lambda values: any(abs(v) > 1e-3 for v in values)
        )
    )
    problem = DiagonalProblem(gamma=gamma, lam=lam, ground_truth=np.zeros(dim))
    return problem, np.array(delta)


@given(problems_and_residuals(), st.floats(min_value=1e-4, max_value=1.0))
@settings(max_examples=200, deadline=None)
def test_level_set_sandwich(case, epsilon):
    problem, delta = case
    delta = delta * np.sqrt(epsilon / train_loss(delta, problem))
    extremes = level_set_extremes(epsilon, problem)
    test = population_loss(delta, problem)

    assert extremes.best * (1 - 1e-9) <= test <= extremes.worst * (1 + 1e-9)


@given(problems_and_residuals(), st.floats(min_value=0.1, max_value=10.0))
@settings(max_examples=100, deadline=None)
def test_losses_scale_quadratically(case, scale):
    problem, delta = case
    assert train_loss(scale * delta, problem) == pytest.approx(scale**2 * train_loss(delta, problem), rel=1e-9)
    assert population_loss(scale * delta, problem) == pytest.approx(
        scale**2 * population_loss(delta, problem), rel=1e-9
    )


@pytest.mark.parametrize(
    "kwargs",
    [
        {"gamma": [1.0, 2.0], "lam": [1.0, 1.0], "ground_truth": [0.0, 0.0]},
        {"gamma": [1.0, 0.0], "lam": [1.0, 1.0], "ground_truth": [0.0, 0.0]},
        {"gamma": [1.0, 0.5], "lam": [1.0, -1.0], "ground_truth": [0.0, 0.0]},
        {"gamma": [1.0, 0.5], "lam": [1.0], "ground_truth": [0.0, 0.0]},
        {"gamma": [1.0, 0.5], "lam": [1.0, 1.0], "ground_truth": [0.0, 0.0], "basis": [[1.0, 1.0], [0.0, 1.0]]},
        {"gamma": [], "lam": [], "ground_truth": []},
    ],
)
def test_problem_validation(kwargs):
    with pytest.raises(MalformedInputError):
        DiagonalProblem(**kwargs)


def test_problem_arrays_are_read_only(two_direction_problem):
    with pytest.raises(ValueError):
        two_direction_problem.gamma[0] = 5.0


def test_residual_state_rejects_negative_time():
    with pytest.raises(MalformedInputError):
        ResidualState(delta=[1.0], time=-1.0)


def test_dataset_counts_and_covariance():
    dataset = Dataset(samples=((1, 3.0), (1, 3.0), (2, 7.0)), dim=2)
    assert dataset.n == 3
    assert dataset.counts() == (2, 1)
    np.testing.assert_allclose(empirical_covariance(dataset), [2.0 / 3.0, 1.0 / 3.0])
    np.testing.assert_array_equal(dataset.design_matrix(), [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def test_dataset_validation():
    with pytest.raises(MalformedInputError):
        Dataset(samples=(), dim=2)
    with pytest.raises(MalformedInputError):
        Dataset(samples=((3, 1.0),), dim=2)


def test_build_problem_sorts_doubly_sampled_direction_first():
    beta_star = [3.0, 7.0]
    problem, start = build_problem(Dataset(samples=((2, 7.0), (2, 7.0), (1, 3.0)), dim=2), beta_star, [0.25, 0.75])

    np.testing.assert_allclose(problem.gamma, [2.0 / 3.0, 1.0 / 3.0])
    np.testing.assert_allclose(problem.lam, [0.75, 0.25])
    assert problem.permutation == (2, 1)
    assert problem.dropped == ()
    np.testing.assert_array_equal(start.delta, [-7.0, -3.0])
    np.testing.assert_array_equal(problem.to_parameters(start.delta), [0.0, 0.0])


def test_build_problem_keeps_order_on_ties():
    problem, _ = build_problem(Dataset(samples=((2, 1.0), (1, 1.0)), dim=2), [1.0, 1.0], [0.5, 0.5])
    assert problem.permutation == (1, 2)


def test_build_problem_drops_unsampled_direction():
    beta_star = [1000.0, 1000.0]
    problem, start = build_problem(Dataset(samples=((1, 1000.0),) * 3, dim=2), beta_star, [0.5, 0.5])

    assert problem.dim == 1
    assert problem.dropped == (2,)
    np.testing.assert_allclose(problem.gamma, [1.0])
    assert problem.frozen_loss == pytest.approx(0.5 * 1000.0**2)
    assert full_population_loss(start, problem) == pytest.approx(population_loss(start, problem) + 5e5)
    np.testing.assert_allclose(problem.to_parameters(start.delta), [0.0, 0.0])


def test_build_problem_rejects_mismatched_ground_truth():
    with pytest.raises(MalformedInputError):
        build_problem(Dataset(samples=((1, 1.0),), dim=2), [1.0], [0.5, 0.5])


def test_from_covariances_diagonal():
    problem, start = DiagonalProblem.from_covariances(
        np.diag([1.0 / 3.0, 2.0 / 3.0]), 0.5 * np.eye(2), beta_star=[1000.0, 1000.0]
    )
    np.testing.assert_allclose(problem.gamma, [2.0 / 3.0, 1.0 / 3.0])
    np.testing.assert_allclose(problem.lam, [0.5, 0.5])
    np.testing.assert_allclose(np.abs(start.delta), [1000.0, 1000.0])
    np.testing.assert_allclose(problem.to_parameters(start.delta), [0.0, 0.0], atol=1e-9)
    assert train_loss(start, problem) == pytest.approx(1e6 * (2.0 / 3.0 + 1.0 / 3.0))


def test_from_covariances_rotated_basis():
    angle = 0.3
    rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    sigma_hat = rotation @ np.diag([2.0, 0.5]) @ rotation.T
    sigma = rotation @ np.diag([1.0, 3.0]) @ rotation.T
    beta_star = np.array([1.0, -2.0])
    beta0 = np.array([0.5, 0.5])

    problem, start = DiagonalProblem.from_covariances(sigma_hat, sigma, beta_star, beta0)

    np.testing.assert_allclose(problem.gamma, [2.0, 0.5])
    np.testing.assert_allclose(problem.lam, [1.0, 3.0])
    np.testing.assert_allclose(problem.to_parameters(start.delta), beta0, atol=1e-12)
    residual = beta0 - beta_star
    assert train_loss(start, problem) == pytest.approx(residual @ sigma_hat @ residual)
    assert population_loss(start, problem) == pytest.approx(residual @ sigma @ residual)


def test_from_covariances_drops_null_directions():
    problem, start = DiagonalProblem.from_covariances(
        np.diag([1.0, 0.0]), np.diag([0.5, 0.25]), beta_star=[2.0, 4.0], beta0=[0.0, 1.0]
    )
    assert problem.dim == 1
    assert problem.dropped == (2,)
    assert problem.frozen_loss == pytest.approx(0.25 * 9.0)
    np.testing.assert_allclose(problem.to_parameters(start.delta), [0.0, 1.0], atol=1e-12)


def test_from_covariances_rejects_non_commuting_pair():
    with pytest.raises(MalformedInputError):
        DiagonalProblem.from_covariances(np.diag([2.0, 1.0]), [[1.0, 0.5], [0.5, 1.0]], beta_star=[0.0, 0.0])


def test_from_covariances_rejects_asymmetric_matrix():
    with pytest.raises(MalformedInputError):
        DiagonalProblem.from_covariances([[1.0, 0.2], [0.0, 1.0]], np.eye(2), beta_star=[0.0, 0.0])
