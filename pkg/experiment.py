#!/usr/bin/env python3
"""
Monte Carlo trials of gradient flow versus annealed gradient descent.

Each trial draws n samples x in {e_1, e_2} uniformly with noiseless labels
y = <beta*, x>, builds the empirical problem and runs both optimizers from
beta = 0 to the same train loss epsilon. Trials where both directions were
sampled (DUPLICATED) are checked against the eigenvalue-gap lemma with S = {2};
trials where every sample shares one direction (DEGENERATE) must give both
optimizers the same population loss.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from config import EXPERIMENT_DEFAULTS, NUMERICS
from errors import LemmaInapplicableError, MalformedInputError
from lemma_verify import LemmaReport, make_setup, verify_lemma
from optimizers import annealed_gd, gradient_flow
from quadratic_core import Dataset, build_problem, full_population_loss, population_loss

CLAIM_PROBABILITY = 0.75  # P(two distinct directions among three samples)


class TrialCase(str, Enum):
    DUPLICATED = "DUPLICATED"
    DEGENERATE = "DEGENERATE"


class ExperimentConfig(BaseModel):
    """Validated Monte Carlo configuration."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(EXPERIMENT_DEFAULTS["alpha"], gt=0, lt=1)
    epsilon: float = Field(EXPERIMENT_DEFAULTS["epsilon"], gt=0, lt=1)
    K: int = Field(EXPERIMENT_DEFAULTS["K"], ge=1)
    n: int = Field(EXPERIMENT_DEFAULTS["n"], ge=1)
    dim: int = Field(EXPERIMENT_DEFAULTS["dim"], ge=2, le=2)
    seed: int = Field(EXPERIMENT_DEFAULTS["seed"], ge=0, lt=2**64)
    trials: int = Field(EXPERIMENT_DEFAULTS["trials"], ge=1)


@dataclass(frozen=True)
class TrialResult:
    index: int
    counts: Tuple[int, ...]
    case: TrialCase
    permutation: Tuple[int, ...]
    gf_loss: float
    agd_loss: float
    gf_full_loss: float
    agd_full_loss: float
    gf_stop_time: float
    agd_stop_time: float
    ratio: Optional[float] = None
    ratio_floor: Optional[float] = None
    losses_equal: bool = False
    residuals_equal: bool = False
    report: Optional[LemmaReport] = field(default=None, repr=False)


@dataclass(frozen=True)
class MCSummary:
    trials: int
    duplicated_count: int
    degenerate_count: int
    duplicated_fraction: float
    mean_ratio_duplicated: Optional[float]
    min_ratio_duplicated: Optional[float]
    degenerate_loss_equal_fraction: Optional[float]
    pass_counts: Dict[str, int]
    results: Tuple[TrialResult, ...] = field(default=(), repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "trials": self.trials,
            "duplicated_count": self.duplicated_count,
            "degenerate_count": self.degenerate_count,
            "duplicated_fraction": self.duplicated_fraction,
            "mean_ratio_duplicated": self.mean_ratio_duplicated,
            "min_ratio_duplicated": self.min_ratio_duplicated,
            "degenerate_loss_equal_fraction": self.degenerate_loss_equal_fraction,
            "pass_counts": dict(self.pass_counts),
        }


def ground_truth_for(alpha: float) -> np.ndarray:
    """beta* = (100 / sqrt(alpha), 100 / sqrt(alpha))"""
    if not 0 < alpha < 1:
        raise MalformedInputError(f"alpha must lie in (0, 1), got {alpha}")
    return np.full(2, 100.0 / np.sqrt(alpha))


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trial `index`: Philox keyed by the seed, counter offset by the index."""
    return np.random.Generator(np.random.Philox(key=int(seed), counter=int(index) << 128))


def sample_dataset(rng: np.random.Generator, beta_star, n: int) -> Dataset:
    """n samples x uniform on {e_1, e_2}, y = <beta*, x>.

    Each sample consumes one 64-bit draw; its low bit picks e_1 (0) or e_2 (1).
    """
    beta_star = np.asarray(beta_star, dtype=np.float64).reshape(-1)
    if beta_star.size != 2:
        raise MalformedInputError(f"samples live in two dimensions, beta_star has {beta_star.size}")
    if n < 1:
        raise MalformedInputError(f"n must be positive, got {n}")
    raw = rng.bit_generator.random_raw(int(n))
    directions = (np.asarray(raw, dtype=np.uint64) & np.uint64(1)).astype(np.int64) + 1
    return Dataset(samples=tuple((int(x), float(beta_star[x - 1])) for x in directions), dim=2)


def run_trial(config: ExperimentConfig, rng: np.random.Generator, index: int = 0) -> TrialResult:
    """Sample a dataset and run gradient flow and annealed descent on it."""
    beta_star = ground_truth_for(config.alpha)
    lam = np.full(config.dim, 1.0 / config.dim)
    dataset = sample_dataset(rng, beta_star, config.n)
    problem, start = build_problem(dataset, beta_star, lam)
    counts = dataset.counts()
    case = TrialCase.DEGENERATE if sum(1 for c in counts if c) == 1 else TrialCase.DUPLICATED
    eta = 1.0 / problem.gamma[0]

    report = None
    if case is TrialCase.DUPLICATED:
        try:
            setup = make_setup(start.delta, problem, k=2, alpha=config.alpha, epsilon=config.epsilon)
            report = verify_lemma(start.delta, problem, setup, config.K, snapshots=2)
        except LemmaInapplicableError as e:
            logger.debug(f"Trial {index}: lemma not applicable ({e})")

    if report is not None:
        gf_final, agd_final = report.gf_final, report.agd_final
        gf_stop_time, agd_stop_time = report.stop_time, report.agd_flow_time
    else:
        gf = gradient_flow(start.delta, problem, config.epsilon, snapshots=2)
        agd = annealed_gd(start.delta, problem, eta, config.K, config.epsilon, snapshots=2)
        gf_final, agd_final = gf.final, agd.final
        gf_stop_time, agd_stop_time = gf.stop_time, agd.gf.stop_time

    gf_loss = population_loss(gf_final, problem)
    agd_loss = population_loss(agd_final, problem)
    tolerance = NUMERICS["degenerate_equality"] * max(1.0, gf_loss)
    losses_equal = abs(gf_loss - agd_loss) <= tolerance
    residuals_equal = bool(np.allclose(gf_final.delta, agd_final.delta, rtol=0.0, atol=tolerance))

    ratio = ratio_floor = None
    if case is TrialCase.DUPLICATED and agd_loss > 0:
        ratio = gf_loss / agd_loss
        if report is not None and report.applicable:
            ratio_floor = report.gf_lower_bound / report.agd_upper_bound

    logger.debug(f"Trial {index}: counts={counts} case={case.value} gf={gf_loss!r} agd={agd_loss!r}")
    return TrialResult(
        index=index,
        counts=counts,
        case=case,
        permutation=problem.permutation,
        gf_loss=gf_loss,
        agd_loss=agd_loss,
        gf_full_loss=full_population_loss(gf_final, problem),
        agd_full_loss=full_population_loss(agd_final, problem),
        gf_stop_time=gf_stop_time,
        agd_stop_time=agd_stop_time,
        ratio=ratio,
        ratio_floor=ratio_floor,
        losses_equal=losses_equal,
        residuals_equal=residuals_equal,
        report=report,
    )


def summarize(results: List[TrialResult]) -> MCSummary:
    """Reduce trial results, in index order, to summary statistics and pass counts."""
    results = sorted(results, key=lambda r: r.index)
    duplicated = [r for r in results if r.case is TrialCase.DUPLICATED]
    degenerate = [r for r in results if r.case is TrialCase.DEGENERATE]
    ratios = [r.ratio for r in duplicated if r.ratio is not None]
    reports = [r.report for r in duplicated if r.report is not None and r.report.applicable]
    slack = 1.0 - NUMERICS["ratio_slack"]

    pass_counts = {
        "conditions_held": len(reports),
        "gf_lower_bound": sum(rep.verdicts["gf_lower_bound"] for rep in reports),
        "agd_upper_bound": sum(rep.verdicts["agd_upper_bound"] for rep in reports),
        "stop_time": sum(rep.verdicts["stop_time"] for rep in reports),
        "ratio_floor": sum(
            1 for r in duplicated if r.ratio_floor is not None and r.ratio >= r.ratio_floor * slack
        ),
        "degenerate_equal": sum(r.losses_equal for r in degenerate),
    }
    return MCSummary(
        trials=len(results),
        duplicated_count=len(duplicated),
        degenerate_count=len(degenerate),
        duplicated_fraction=len(duplicated) / len(results),
        mean_ratio_duplicated=float(np.mean(ratios)) if ratios else None,
        min_ratio_duplicated=float(np.min(ratios)) if ratios else None,
        degenerate_loss_equal_fraction=(pass_counts["degenerate_equal"] / len(degenerate)) if degenerate else None,
        pass_counts={k: int(v) for k, v in pass_counts.items()},
        results=tuple(results),
    )


def monte_carlo(config: ExperimentConfig) -> MCSummary:
    """Run config.trials independent trials; trial i draws from trial_rng(config.seed, i)."""
    logger.info(f"Running {config.trials} trials (alpha={config.alpha}, epsilon={config.epsilon}, K={config.K})")
    results = [run_trial(config, trial_rng(config.seed, i), index=i) for i in range(config.trials)]
    summary = summarize(results)
    logger.info(f"Duplicated fraction {summary.duplicated_fraction:.4f} over {summary.trials} trials")
    return summary


def claim_checks(summary: MCSummary) -> Dict[str, bool]:
    """Pass/fail of each assertion of the two-to-one generalization gap claim.

    - duplicated_fraction: within 3 sigma of 3/4 (binomial)
    - ratio_floor: every duplicated trial meeting the hypotheses reaches its ratio floor
    - lemma_bounds: every such trial satisfies both population-loss bounds
    - degenerate_equality: every degenerate trial has equal losses
    """
    sigma = np.sqrt(CLAIM_PROBABILITY * (1.0 - CLAIM_PROBABILITY) / summary.trials)
    counts = summary.pass_counts
    held = counts["conditions_held"]
    return {
        "duplicated_fraction": bool(abs(summary.duplicated_fraction - CLAIM_PROBABILITY) <= 3.0 * sigma),
        "ratio_floor": counts["ratio_floor"] == held,
        "lemma_bounds": counts["gf_lower_bound"] == held and counts["agd_upper_bound"] == held,
        "degenerate_equality": counts["degenerate_equal"] == summary.degenerate_count,
    }
