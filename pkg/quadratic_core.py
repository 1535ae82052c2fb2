#!/usr/bin/env python3
"""
Diagonalized quadratic train/population loss pairs.

Problems live in the shared eigenbasis of the empirical covariance (eigenvalues
gamma) and the population covariance (eigenvalues lambda). Residuals are
delta = U^T (beta - beta*), so both losses are weighted sums of squares:

    train_loss(delta)      = sum_i gamma_i  delta_i^2
    population_loss(delta) = sum_i lambda_i delta_i^2

Coordinate indices exposed by this module (best_index, dropped, permutation)
are 1-based, matching the sample directions e_1, ..., e_d.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from config import NUMERICS
from errors import LrSchedError, MalformedInputError


class Phase(str, Enum):
    """Which part of an optimization a residual snapshot belongs to."""

    INIT = "INIT"
    GD = "GD"
    GF = "GF"


def _frozen_vector(values, name: str) -> np.ndarray:
    array = np.array(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(array)):
        raise MalformedInputError(f"{name} must be finite, got {array}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class DiagonalProblem:
    """A train/test quadratic pair in a shared eigenbasis.

    Attributes:
        gamma: train eigenvalues, sorted non-increasing, strictly positive
        lam: population eigenvalues, same order as gamma
        ground_truth: beta* expressed in eigen-coordinates
        basis: optional matrix U with orthonormal columns mapping eigen-coordinates
            to parameter coordinates (identity when absent)
        dropped: 1-based indices of rank-deficient coordinates removed at construction
        permutation: for each eigen-coordinate, the 1-based source coordinate
        frozen_loss: population loss carried by the dropped coordinates
        frozen_parameters: parameter-space component of beta that never moves
    """

    gamma: np.ndarray
    lam: np.ndarray
    ground_truth: np.ndarray
    basis: Optional[np.ndarray] = None
    dropped: Tuple[int, ...] = ()
    permutation: Tuple[int, ...] = ()
    frozen_loss: float = 0.0
    frozen_parameters: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        gamma = _frozen_vector(self.gamma, "gamma")
        lam = _frozen_vector(self.lam, "lambda")
        ground_truth = _frozen_vector(self.ground_truth, "ground_truth")
        d = gamma.size

        if d == 0:
            raise MalformedInputError("problem needs at least one coordinate")
        if lam.size != d or ground_truth.size != d:
            raise MalformedInputError(
                f"dimension mismatch: gamma has {d} entries, lambda {lam.size}, ground_truth {ground_truth.size}"
            )
        if np.any(gamma <= 0):
            raise MalformedInputError(f"gamma must be strictly positive, got {gamma}")
        if np.any(np.diff(gamma) > 0):
            raise MalformedInputError(f"gamma must be sorted non-increasing, got {gamma}")
        if np.any(lam < 0):
            raise MalformedInputError(f"lambda must be non-negative, got {lam}")

        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "ground_truth", ground_truth)

        if self.basis is not None:
            basis = np.array(self.basis, dtype=np.float64)
            if basis.ndim != 2 or basis.shape[1] != d or basis.shape[0] < d:
                raise MalformedInputError(f"basis must have shape (D, {d}) with D >= {d}, got {basis.shape}")
            gram_error = np.max(np.abs(basis.T @ basis - np.eye(d)))
            if gram_error > NUMERICS["orthonormal_atol"]:
                raise MalformedInputError(f"basis columns are not orthonormal (max |U^T U - I| = {gram_error:.3e})")
            basis.setflags(write=False)
            object.__setattr__(self, "basis", basis)

        if self.frozen_parameters is not None:
            frozen = _frozen_vector(self.frozen_parameters, "frozen_parameters")
            if frozen.size != self.parameter_dim:
                raise MalformedInputError("frozen_parameters must live in parameter space")
            object.__setattr__(self, "frozen_parameters", frozen)

        if not self.permutation:
            object.__setattr__(self, "permutation", tuple(range(1, d + 1)))
        object.__setattr__(self, "dropped", tuple(int(i) for i in self.dropped))
        object.__setattr__(self, "frozen_loss", float(self.frozen_loss))

    @property
    def dim(self) -> int:
        return int(self.gamma.size)

    @property
    def parameter_dim(self) -> int:
        return self.dim if self.basis is None else int(self.basis.shape[0])

    def to_parameters(self, delta) -> np.ndarray:
        """Map a residual to parameter space: beta = U (delta + beta*) + frozen part."""
        delta = as_delta(delta, self)
        eigen_beta = delta + self.ground_truth
        beta = eigen_beta.copy() if self.basis is None else self.basis @ eigen_beta
        if self.frozen_parameters is not None:
            beta = beta + self.frozen_parameters
        return beta

    @classmethod
    def from_covariances(
        cls,
        sigma_hat,
        sigma,
        beta_star,
        beta0=None,
    ) -> Tuple["DiagonalProblem", "ResidualState"]:
        """Jointly diagonalize a commuting (empirical, population) covariance pair.

        Returns the problem restricted to the image of sigma_hat and the initial
        residual delta(0) = U^T (beta0 - beta*), beta0 defaulting to zero.
        """
        sigma_hat = np.array(sigma_hat, dtype=np.float64)
        sigma = np.array(sigma, dtype=np.float64)
        beta_star = np.array(beta_star, dtype=np.float64).reshape(-1)
        n_params = beta_star.size
        beta0 = np.zeros(n_params) if beta0 is None else np.array(beta0, dtype=np.float64).reshape(-1)

        for name, matrix in (("sigma_hat", sigma_hat), ("sigma", sigma)):
            if matrix.shape != (n_params, n_params):
                raise MalformedInputError(f"{name} must have shape {(n_params, n_params)}, got {matrix.shape}")
            if not np.allclose(matrix, matrix.T, rtol=0.0, atol=NUMERICS["orthonormal_atol"]):
                raise MalformedInputError(f"{name} must be symmetric")
        if beta0.size != n_params:
            raise MalformedInputError("beta0 and beta_star must have the same length")

        commutator = np.max(np.abs(sigma @ sigma_hat - sigma_hat @ sigma))
        if commutator > NUMERICS["commutation_atol"]:
            raise MalformedInputError(
                f"covariances are not simultaneously diagonalizable (commutator {commutator:.3e})"
            )

        # Diagonalize sigma_hat, then sigma inside each sigma_hat eigenspace.
        values, vectors = np.linalg.eigh(sigma_hat)
        scale = max(np.max(np.abs(values)), 1.0)
        columns = []
        start = 0
        while start < n_params:
            stop = start + 1
            while stop < n_params and values[stop] - values[start] <= NUMERICS["commutation_atol"] * scale:
                stop += 1
            block = vectors[:, start:stop]
            _, rotation = np.linalg.eigh(block.T @ sigma @ block)
            columns.append(block @ rotation)
            start = stop
        basis = np.hstack(columns)

        gamma = np.einsum("ij,jk,ki->i", basis.T, sigma_hat, basis)
        lam = np.clip(np.einsum("ij,jk,ki->i", basis.T, sigma, basis), 0.0, None)
        order = np.argsort(-gamma, kind="stable")
        basis, gamma, lam = basis[:, order], gamma[order], lam[order]

        keep = gamma > NUMERICS["rank_rtol"] * max(np.max(gamma), 0.0)
        if not np.any(keep):
            raise MalformedInputError("sigma_hat has no positive eigenvalues")

        residual = basis.T @ (beta0 - beta_star)
        frozen_basis = basis[:, ~keep]
        frozen_parameters = frozen_basis @ (frozen_basis.T @ beta0)
        problem = cls(
            gamma=gamma[keep],
            lam=lam[keep],
            ground_truth=basis[:, keep].T @ beta_star,
            basis=basis[:, keep],
            dropped=tuple(int(i) + 1 for i in np.flatnonzero(~keep)),
            frozen_loss=float(np.dot(lam[~keep], residual[~keep] ** 2)),
            frozen_parameters=frozen_parameters,
        )
        if problem.dropped:
            logger.debug(f"Dropped rank-deficient eigen-coordinates {problem.dropped}")
        return problem, ResidualState(delta=residual[keep], time=0.0, phase=Phase.INIT)


@dataclass(frozen=True)
class ResidualState:
    """Residual coordinates at a time (GF) or step count (GD)."""

    delta: np.ndarray
    time: float = 0.0
    phase: Phase = Phase.INIT

    def __post_init__(self):
        object.__setattr__(self, "delta", _frozen_vector(self.delta, "delta"))
        if self.time < 0:
            raise MalformedInputError(f"time must be non-negative, got {self.time}")
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "phase", Phase(self.phase))

    def to_parameters(self, problem: DiagonalProblem) -> np.ndarray:
        return problem.to_parameters(self.delta)


@dataclass(frozen=True)
class Dataset:
    """n samples (x_i, y_i) with x_i a standard basis vector, stored by 1-based index."""

    samples: Tuple[Tuple[int, float], ...]
    dim: int

    def __post_init__(self):
        samples = tuple((int(x), float(y)) for x, y in self.samples)
        if self.dim < 1:
            raise MalformedInputError(f"dim must be positive, got {self.dim}")
        if not samples:
            raise MalformedInputError("dataset must contain at least one sample")
        for x, _ in samples:
            if not 1 <= x <= self.dim:
                raise MalformedInputError(f"sample direction e_{x} outside 1..{self.dim}")
        object.__setattr__(self, "samples", samples)

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def indices(self) -> np.ndarray:
        return np.array([x for x, _ in self.samples], dtype=np.int64)

    def counts(self) -> Tuple[int, ...]:
        """Number of samples along each direction e_1..e_d."""
        return tuple(int(c) for c in np.bincount(self.indices - 1, minlength=self.dim))

    def design_matrix(self) -> np.ndarray:
        """Rows are the sample vectors x_i."""
        return np.eye(self.dim)[self.indices - 1]


@dataclass(frozen=True)
class LevelSetExtremes:
    """Min and max population loss over the epsilon train-loss level set."""

    best: float
    worst: float
    best_index: int
    worst_index: int


@dataclass(frozen=True)
class LevelSetPoint:
    """A residual on the epsilon train level set with its losses."""

    label: str
    state: ResidualState
    train_loss: float
    test_loss: float


def as_delta(state: Union[ResidualState, Sequence[float], np.ndarray], problem: DiagonalProblem) -> np.ndarray:
    delta = state.delta if isinstance(state, ResidualState) else np.asarray(state, dtype=np.float64).reshape(-1)
    if delta.size != problem.dim:
        raise MalformedInputError(f"residual has {delta.size} coordinates, problem has {problem.dim}")
    return delta


def train_loss(state, problem: DiagonalProblem) -> float:
    """sum_i gamma_i delta_i^2"""
    delta = as_delta(state, problem)
    return float(np.sum(problem.gamma * delta * delta))


def population_loss(state, problem: DiagonalProblem) -> float:
    """sum_i lambda_i delta_i^2"""
    delta = as_delta(state, problem)
    return float(np.sum(problem.lam * delta * delta))


def full_population_loss(state, problem: DiagonalProblem) -> float:
    """Population loss including coordinates dropped as rank-deficient."""
    return population_loss(state, problem) + problem.frozen_loss


def level_set_extremes(epsilon: float, problem: DiagonalProblem) -> LevelSetExtremes:
    """Best and worst population loss among residuals with train loss epsilon.

    Ties resolve to the lowest coordinate index.
    """
    if not epsilon > 0:
        raise MalformedInputError(f"epsilon must be positive, got {epsilon}")
    ratios = problem.lam / problem.gamma
    best_index = int(np.argmin(ratios))
    worst_index = int(np.argmax(ratios))
    return LevelSetExtremes(
        best=float(epsilon * ratios[best_index]),
        worst=float(epsilon * ratios[worst_index]),
        best_index=best_index + 1,
        worst_index=worst_index + 1,
    )


def good_bad_residuals(epsilon: float, problem: DiagonalProblem) -> Tuple[LevelSetPoint, LevelSetPoint]:
    """Residuals on the epsilon train level set attaining the best and worst test loss."""
    extremes = level_set_extremes(epsilon, problem)
    points = []
    for label, index in (("good", extremes.best_index), ("bad", extremes.worst_index)):
        delta = np.zeros(problem.dim)
        delta[index - 1] = np.sqrt(epsilon / problem.gamma[index - 1])
        state = ResidualState(delta=delta)
        points.append(LevelSetPoint(label, state, train_loss(state, problem), population_loss(state, problem)))
    return points[0], points[1]


def empirical_covariance(dataset: Dataset) -> np.ndarray:
    """Diagonal of (1/n) X^T X: the fraction of samples along each direction."""
    if dataset.n < 1:
        raise MalformedInputError("empirical covariance of an empty dataset")
    return np.array(dataset.counts(), dtype=np.float64) / dataset.n


def build_problem(dataset: Dataset, beta_star, lam) -> Tuple[DiagonalProblem, ResidualState]:
    """Build the train/population problem for a dataset, starting from beta = 0.

    Coordinates never sampled are dropped; the rest are sorted by gamma
    (stable, so equal gammas keep their original order).
    """
    beta_star = np.array(beta_star, dtype=np.float64).reshape(-1)
    lam = np.array(lam, dtype=np.float64).reshape(-1)
    if beta_star.size != dataset.dim or lam.size != dataset.dim:
        raise MalformedInputError(
            f"beta_star ({beta_star.size}) and lambda ({lam.size}) must match dataset dim {dataset.dim}"
        )
    if np.any(lam < 0):
        raise MalformedInputError(f"lambda must be non-negative, got {lam}")

    gamma_full = empirical_covariance(dataset)
    kept = np.flatnonzero(gamma_full > 0)
    if kept.size == 0:
        raise LrSchedError("empirical covariance is identically zero")
    order = kept[np.argsort(-gamma_full[kept], kind="stable")]
    dropped = np.setdiff1d(np.arange(dataset.dim), kept)

    problem = DiagonalProblem(
        gamma=gamma_full[order],
        lam=lam[order],
        ground_truth=beta_star[order],
        basis=np.eye(dataset.dim)[:, order],
        dropped=tuple(int(i) + 1 for i in dropped),
        permutation=tuple(int(i) + 1 for i in order),
        frozen_loss=float(np.dot(lam[dropped], beta_star[dropped] ** 2)),
    )
    return problem, ResidualState(delta=-beta_star[order], time=0.0, phase=Phase.INIT)
