#!/usr/bin/env python3
"""
Gradient flow and annealed gradient descent on diagonal quadratics.

Gradient flow uses the closed form delta_i(t) = delta_i(0) exp(-2 gamma_i t)
and stops when the train loss first reaches epsilon. Annealed gradient descent
takes up to K steps delta_i <- (1 - 2 eta gamma_i) delta_i and then continues
with gradient flow. The Euler oracle iterates small gradient steps and exists
to cross-check the closed form.
"""

from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy import optimize

from config import NUMERICS, OUTPUT_CONFIG
from errors import LrSchedError, MalformedInputError
from quadratic_core import DiagonalProblem, Phase, ResidualState, as_delta, population_loss, train_loss

_PHASE_ORDER = {Phase.INIT: 0, Phase.GD: 1, Phase.GF: 2}


@dataclass(frozen=True)
class TrajectoryPoint:
    phase: Phase
    time: float
    delta: np.ndarray
    train_loss: float
    test_loss: float


@dataclass(frozen=True)
class Trajectory:
    """Ordered residual snapshots; phases run INIT, GD, GF with increasing time inside each."""

    points: Tuple[TrajectoryPoint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        previous = None
        for point in self.points:
            if previous is not None:
                if _PHASE_ORDER[point.phase] < _PHASE_ORDER[previous.phase]:
                    raise LrSchedError(f"phase {point.phase.value} recorded after {previous.phase.value}")
                if point.phase == previous.phase and not point.time > previous.time:
                    raise LrSchedError(f"{point.phase.value} times must strictly increase")
            previous = point

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[TrajectoryPoint]:
        return iter(self.points)

    def __add__(self, other: "Trajectory") -> "Trajectory":
        return Trajectory(self.points + other.points)

    def only(self, *phases: Phase) -> "Trajectory":
        return Trajectory(tuple(p for p in self.points if p.phase in phases))

    def deltas(self) -> np.ndarray:
        return np.array([p.delta for p in self.points])

    def parameters(self, problem: DiagonalProblem) -> np.ndarray:
        """Snapshots mapped to parameter space, one row per point."""
        return np.array([problem.to_parameters(p.delta) for p in self.points])


@dataclass(frozen=True)
class GFResult:
    stop_time: float
    final: ResidualState
    trajectory: Trajectory


@dataclass(frozen=True)
class AnnealedResult:
    gd_steps_taken: int
    post_gd: ResidualState
    gf: GFResult
    trajectory: Trajectory
    eta: float

    @property
    def final(self) -> ResidualState:
        return self.gf.final


def _point(delta: np.ndarray, time: float, phase: Phase, problem: DiagonalProblem) -> TrajectoryPoint:
    delta = np.array(delta, dtype=np.float64)
    delta.setflags(write=False)
    return TrajectoryPoint(phase, float(time), delta, train_loss(delta, problem), population_loss(delta, problem))


def _check_epsilon(epsilon: float) -> None:
    if not epsilon > 0:
        raise MalformedInputError(f"epsilon must be positive, got {epsilon}")


def _check_snapshots(snapshots: Optional[int]) -> int:
    snapshots = OUTPUT_CONFIG["snapshots"] if snapshots is None else int(snapshots)
    if snapshots < 2:
        raise MalformedInputError(f"snapshots must be at least 2, got {snapshots}")
    return snapshots


def top_eigenspace_mask(problem: DiagonalProblem) -> np.ndarray:
    return problem.gamma / problem.gamma[0] >= 1.0 - NUMERICS["top_eigenspace_rtol"]


def update_factors(problem: DiagonalProblem, eta: float) -> np.ndarray:
    """Per-coordinate gradient descent multipliers 1 - 2 eta gamma_i.

    With eta = 1/gamma_1 the top eigenspace gets exactly -1.
    """
    if not eta > 0:
        raise MalformedInputError(f"step size must be positive, got {eta}")
    factors = 1.0 - 2.0 * eta * problem.gamma
    if abs(eta * problem.gamma[0] - 1.0) <= NUMERICS["top_eigenspace_rtol"]:
        factors[top_eigenspace_mask(problem)] = -1.0
    factors.setflags(write=False)
    return factors


def is_divergent(problem: DiagonalProblem, eta: float) -> bool:
    """True when the top coordinate grows under gradient descent, |1 - 2 eta gamma_1| > 1."""
    return bool(abs(update_factors(problem, eta)[0]) > 1.0)


def gf_state(delta0, problem: DiagonalProblem, t: float) -> np.ndarray:
    """Gradient flow residual at time t: delta_i(0) exp(-2 gamma_i t)."""
    if t < 0:
        raise MalformedInputError(f"time must be non-negative, got {t}")
    return as_delta(delta0, problem) * np.exp(-2.0 * problem.gamma * t)


def solve_stop_time(delta0, problem: DiagonalProblem, epsilon: float) -> float:
    """First time T at which the gradient flow train loss equals epsilon.

    Doubling from 1 brackets T, then Brent's method narrows it. Returns 0 when
    delta0 already has train loss at most epsilon.
    """
    _check_epsilon(epsilon)
    delta0 = as_delta(delta0, problem)
    weights = problem.gamma * delta0 * delta0
    rates = 4.0 * problem.gamma

    def loss_at(t: float) -> float:
        return float(np.sum(weights * np.exp(-rates * t)))

    if loss_at(0.0) <= epsilon:
        return 0.0

    tolerance = NUMERICS["stop_time_rtol"] * max(1.0, epsilon)
    lo, hi = 0.0, 1.0
    doublings = 0
    while loss_at(hi) >= epsilon:
        lo, hi = hi, 2.0 * hi
        doublings += 1
        if doublings > NUMERICS["stop_time_max_doublings"]:
            raise LrSchedError("could not bracket the gradient flow stopping time")

    root, info = optimize.brentq(
        lambda t: loss_at(t) - epsilon,
        lo,
        hi,
        xtol=NUMERICS["stop_time_xtol"],
        maxiter=NUMERICS["stop_time_max_iterations"],
        full_output=True,
        disp=False,
    )
    if not info.converged:
        logger.debug(f"Stop-time root search stopped after {info.iterations} iterations on [{lo!r}, {hi!r}]")
    # hi always has train loss below epsilon
    if loss_at(root) - epsilon > tolerance:
        return hi
    return float(root)


def _flow_points(delta0: np.ndarray, problem: DiagonalProblem, stop_time: float, snapshots: int) -> List[TrajectoryPoint]:
    if stop_time == 0.0:
        return [_point(delta0, 0.0, Phase.GF, problem)]
    return [_point(gf_state(delta0, problem, t), t, Phase.GF, problem) for t in np.linspace(0.0, stop_time, snapshots)]


def gradient_flow(delta0, problem: DiagonalProblem, epsilon: float, snapshots: Optional[int] = None) -> GFResult:
    """Run gradient flow from delta0 until the train loss reaches epsilon."""
    snapshots = _check_snapshots(snapshots)
    delta0 = as_delta(delta0, problem)
    stop_time = solve_stop_time(delta0, problem, epsilon)
    final = ResidualState(delta=gf_state(delta0, problem, stop_time), time=stop_time, phase=Phase.GF)
    points = [_point(delta0, 0.0, Phase.INIT, problem)] + _flow_points(delta0, problem, stop_time, snapshots)
    logger.debug(f"Gradient flow stopped at T={stop_time:.6g} with train loss {train_loss(final, problem):.6g}")
    return GFResult(stop_time=stop_time, final=final, trajectory=Trajectory(tuple(points)))


def gd_step(delta, problem: DiagonalProblem, eta: float) -> np.ndarray:
    """One gradient descent step: delta_i <- (1 - 2 eta gamma_i) delta_i."""
    return as_delta(delta, problem) * update_factors(problem, eta)


def _descend(delta0: np.ndarray, problem: DiagonalProblem, eta: float, K: int, epsilon: float) -> List[np.ndarray]:
    """Iterates after each gradient step, stopping once the train loss is at most epsilon."""
    if K < 0:
        raise MalformedInputError(f"K must be non-negative, got {K}")
    _check_epsilon(epsilon)
    factors = update_factors(problem, eta)
    if is_divergent(problem, eta):
        logger.warning(f"Step size {eta} exceeds 1/gamma_1 = {1.0 / problem.gamma[0]}; the top coordinate diverges")

    iterates = []
    delta = delta0
    if train_loss(delta, problem) <= epsilon:
        return iterates
    for _ in range(int(K)):
        delta = delta * factors
        iterates.append(delta)
        if train_loss(delta, problem) <= epsilon:
            break
    return iterates


def gradient_descent(delta0, problem: DiagonalProblem, eta: float, K: int, epsilon: float) -> Tuple[ResidualState, int]:
    """Up to K gradient steps with step size eta, early-stopped at train loss epsilon."""
    delta0 = as_delta(delta0, problem)
    iterates = _descend(delta0, problem, eta, K, epsilon)
    if not iterates:
        return ResidualState(delta=delta0, time=0.0, phase=Phase.INIT), 0
    return ResidualState(delta=iterates[-1], time=len(iterates), phase=Phase.GD), len(iterates)


def _gd_points(iterates: List[np.ndarray], problem: DiagonalProblem, snapshots: int) -> List[TrajectoryPoint]:
    steps = len(iterates)
    if steps <= snapshots:
        chosen = range(1, steps + 1)
    else:
        chosen = np.unique(np.rint(np.linspace(1, steps, snapshots)).astype(int))
    return [_point(iterates[s - 1], s, Phase.GD, problem) for s in chosen]


def annealed_gd(
    delta0,
    problem: DiagonalProblem,
    eta: Optional[float],
    K: int,
    epsilon: float,
    snapshots: Optional[int] = None,
) -> AnnealedResult:
    """Large-step gradient descent for up to K steps, then gradient flow to epsilon.

    eta defaults to 1/gamma_1, the step size at which the top eigenspace oscillates.
    """
    snapshots = _check_snapshots(snapshots)
    delta0 = as_delta(delta0, problem)
    eta = 1.0 / problem.gamma[0] if eta is None else float(eta)

    iterates = _descend(delta0, problem, eta, K, epsilon)
    if iterates:
        post_gd = ResidualState(delta=iterates[-1], time=len(iterates), phase=Phase.GD)
    else:
        post_gd = ResidualState(delta=delta0, time=0.0, phase=Phase.INIT)

    gf = gradient_flow(post_gd.delta, problem, epsilon, snapshots)
    points = [_point(delta0, 0.0, Phase.INIT, problem)] + _gd_points(iterates, problem, snapshots)
    trajectory = Trajectory(tuple(points)) + gf.trajectory.only(Phase.GF)
    logger.debug(f"Annealed descent took {len(iterates)} steps at eta={eta!r}, then flowed for T={gf.stop_time:.6g}")
    return AnnealedResult(
        gd_steps_taken=len(iterates),
        post_gd=post_gd,
        gf=gf,
        trajectory=trajectory,
        eta=eta,
    )


def euler_flow(
    delta0,
    problem: DiagonalProblem,
    step: float,
    epsilon: float,
    snapshots: Optional[int] = None,
    max_steps: int = 10**9,
) -> GFResult:
    """Approximate gradient flow by gradient steps of size `step` until train loss <= epsilon.

    stop_time is steps * step. Iterates are produced in vectorized blocks of
    repeated multiplication.
    """
    snapshots = _check_snapshots(snapshots)
    _check_epsilon(epsilon)
    delta0 = as_delta(delta0, problem)
    if not step > 0:
        raise MalformedInputError(f"step must be positive, got {step}")
    factors = 1.0 - 2.0 * step * problem.gamma
    if not factors[0] > 0:
        raise MalformedInputError(f"step {step} too large for a stable flow approximation (needs < {0.5 / problem.gamma[0]})")

    if train_loss(delta0, problem) <= epsilon:
        final_delta, steps = delta0, 0
    else:
        block = NUMERICS["euler_block"]
        multipliers = np.cumprod(np.broadcast_to(factors, (block, problem.dim)), axis=0)
        delta, done = delta0, 0
        while True:
            iterates = delta * multipliers
            below = np.flatnonzero(iterates ** 2 @ problem.gamma <= epsilon)
            if below.size:
                final_delta, steps = iterates[below[0]], done + int(below[0]) + 1
                break
            delta, done = iterates[-1], done + block
            if done > max_steps:
                raise LrSchedError(f"Euler oracle did not reach epsilon within {max_steps} steps")

    stop_time = steps * step
    final = ResidualState(delta=final_delta, time=stop_time, phase=Phase.GF)
    points = [_point(delta0, 0.0, Phase.INIT, problem)]
    if steps == 0:
        points.append(_point(delta0, 0.0, Phase.GF, problem))
    else:
        recorded = np.unique(np.rint(np.linspace(0, steps, min(snapshots, steps + 1))).astype(int))
        for s in recorded[:-1]:
            points.append(_point(delta0 * factors ** s, s * step, Phase.GF, problem))
        points.append(_point(final_delta, stop_time, Phase.GF, problem))
    return GFResult(stop_time=stop_time, final=final, trajectory=Trajectory(tuple(points)))


def euler_oracle(delta0, problem: DiagonalProblem, step: float, epsilon: float) -> ResidualState:
    """Final residual of the small-step gradient descent approximation of gradient flow."""
    return euler_flow(delta0, problem, step, epsilon, snapshots=2).final
