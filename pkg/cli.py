#!/usr/bin/env python3
"""
Command-line front end for the learning-rate schedule simulator.

Commands:
1. claim       - Monte Carlo check of the two-to-one generalization gap (exit 2 on failure)
2. montecarlo  - the same trials, reporting only
3. lemma       - verify the eigenvalue-gap lemma on an instance file
4. trajectory  - record a gradient flow, annealed or Euler trajectory
5. landscape   - 2-D loss landscape grid and figure

Exit codes: 0 pass, 1 usage or configuration error, 2 assertion failure,
3 lemma not applicable.

Usage:
- Run: python cli.py claim --alpha 0.01 --epsilon 0.01 --K 10 --trials 10000 --seed 7
- Run: python cli.py lemma instance.json --out results/
"""

import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import EXPERIMENT_DEFAULTS, OUTPUT_CONFIG, TOOL_VERSION
from errors import BoundViolationError, ConfigError, LemmaInapplicableError, LrSchedError, MalformedInputError
from experiment import ExperimentConfig, claim_checks, monte_carlo
from landscape import default_span, landscape_grid, render_landscape, save_svg
from lemma_verify import make_setup, verify_lemma
from optimizers import annealed_gd, euler_flow, gradient_flow
from quadratic_core import DiagonalProblem
from reporting import ReportWriter, format_lemma_report, format_summary

FILES = OUTPUT_CONFIG["files"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ASSERTION = 2
EXIT_INAPPLICABLE = 3


class InstanceSpec(BaseModel):
    """A diagonal problem plus lemma parameters, as read from an instance file."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    gamma: List[float] = Field(min_length=1)
    lam: List[float] = Field(alias="lambda")
    delta0: List[float]
    k: Optional[int] = None
    alpha: float = Field(EXPERIMENT_DEFAULTS["alpha"], gt=0, lt=1)
    epsilon: float = Field(EXPERIMENT_DEFAULTS["epsilon"], gt=0)
    K: int = Field(EXPERIMENT_DEFAULTS["K"], ge=0)
    beta_star: Optional[List[float]] = None

    @field_validator("gamma")
    @classmethod
    def gamma_sorted_positive(cls, value: List[float]) -> List[float]:
        if any(g <= 0 for g in value):
            raise ValueError("gamma must be strictly positive")
        if any(a < b for a, b in zip(value, value[1:])):
            raise ValueError("gamma must be sorted in non-increasing order")
        return value

    @field_validator("lam")
    @classmethod
    def lam_non_negative(cls, value: List[float]) -> List[float]:
        if any(v < 0 for v in value):
            raise ValueError("lambda must be non-negative")
        return value

    @model_validator(mode="after")
    def dimensions_match(self) -> "InstanceSpec":
        d = len(self.gamma)
        sizes = {"lambda": len(self.lam), "delta0": len(self.delta0)}
        if self.beta_star is not None:
            sizes["beta_star"] = len(self.beta_star)
        mismatched = [name for name, size in sizes.items() if size != d]
        if mismatched:
            raise ValueError(f"{', '.join(mismatched)} must have {d} entries like gamma")
        return self

    def problem(self) -> DiagonalProblem:
        ground_truth = np.zeros(len(self.gamma)) if self.beta_star is None else self.beta_star
        return DiagonalProblem(gamma=self.gamma, lam=self.lam, ground_truth=ground_truth)


def _read_json(path: str) -> Dict[str, Any]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    if not isinstance(payload, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return payload


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Flags win over file values; unset flags (None) are ignored."""
    merged = dict(base)
    merged.update({key: value for key, value in overrides.items() if value is not None})
    return merged


def load_experiment_config(path: Optional[str], **overrides) -> ExperimentConfig:
    """Resolve an ExperimentConfig from defaults, an optional JSON file and flags."""
    values = _read_json(path) if path else {}
    values.pop("out", None)
    try:
        return ExperimentConfig(**_merge(values, overrides))
    except ValidationError as e:
        raise ConfigError(f"invalid experiment configuration:\n{e}") from e


def load_instance(path: str, **overrides) -> InstanceSpec:
    """Read and validate an instance file, applying flag overrides."""
    try:
        return InstanceSpec.model_validate(_merge(_read_json(path), overrides))
    except ValidationError as e:
        raise ConfigError(f"invalid instance {path}:\n{e}") from e


def configure_logging(level: Optional[str] = None) -> None:
    logger.remove()
    logger.add(sys.stderr, level=(level or OUTPUT_CONFIG["log_level"]).upper())


def experiment_options(func):
    """Flags shared by claim and montecarlo."""
    options = [
        click.option("--alpha", type=float, default=None, help="Lower-bound slack, 0 < alpha < 1."),
        click.option("--epsilon", type=float, default=None, help="Early-stopping train loss."),
        click.option("--K", "K", type=int, default=None, help="Large-step gradient descent steps."),
        click.option("--trials", type=int, default=None, help="Number of Monte Carlo trials."),
        click.option("--seed", type=int, default=None, help="64-bit unsigned seed."),
        click.option("--n", type=int, default=None, help="Samples per dataset."),
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None),
        click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _run_experiment(command: str, config_path, out, assert_claim: bool, **flags) -> int:
    config = load_experiment_config(config_path, **flags)
    summary = monte_carlo(config)
    checks = claim_checks(summary)

    writer = ReportWriter(out)
    payload = summary.to_dict()
    payload["config"] = config.model_dump()
    payload["checks"] = checks
    writer.write_json(FILES[f"{command}_summary"], payload)
    writer.write_trials_csv(FILES[f"{command}_trials"], summary.results)
    writer.write_manifest(command, config.model_dump(), seed=config.seed)

    click.echo(format_summary(summary, checks))
    if not assert_claim:
        return EXIT_OK
    if all(checks.values()):
        click.echo("✅ Claim holds")
        return EXIT_OK
    failed = ", ".join(name for name, ok in checks.items() if not ok)
    click.echo(f"❌ Claim assertions failed: {failed}", err=True)
    return EXIT_ASSERTION


@click.group()
@click.version_option(TOOL_VERSION, prog_name="lrsched")
def cli():
    """Gradient flow versus annealed gradient descent on linear regression."""


@cli.command()
@experiment_options
def claim(config_path, out, **flags):
    """Check the two-to-one population loss gap by Monte Carlo."""
    return _run_experiment("claim", config_path, out, assert_claim=True, **flags)


@cli.command()
@experiment_options
def montecarlo(config_path, out, **flags):
    """Run the claim trials and report statistics without asserting."""
    return _run_experiment("montecarlo", config_path, out, assert_claim=False, **flags)


@cli.command()
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", type=float, default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--K", "K", type=int, default=None)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def lemma(instance, out, **flags):
    """Verify the eigenvalue-gap lemma on INSTANCE."""
    spec = load_instance(instance, **flags)
    if spec.k is None:
        raise ConfigError(f"{instance} must set k, the first index of the small eigenvalue block")
    problem = spec.problem()
    writer = ReportWriter(out)
    resolved = spec.model_dump(by_alias=True)

    try:
        setup = make_setup(spec.delta0, problem, spec.k, spec.alpha, spec.epsilon)
        report = verify_lemma(spec.delta0, problem, setup, spec.K, snapshots=2)
    except LemmaInapplicableError as e:
        writer.write_json(FILES["lemma_report"], {"status": "INAPPLICABLE", "reason": str(e)})
        writer.write_manifest("lemma", resolved)
        click.echo(f"⏭️  Lemma not applicable: {e}", err=True)
        return EXIT_INAPPLICABLE

    writer.write_json(FILES["lemma_report"], report.to_dict())
    writer.write_manifest("lemma", resolved)
    click.echo(format_lemma_report(report))
    return {"PASS": EXIT_OK, "SKIPPED": EXIT_INAPPLICABLE, "FAIL": EXIT_ASSERTION}[report.status]


@cli.command()
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option("--optimizer", type=click.Choice(["gf", "anneal", "euler"]), default="gf", show_default=True)
@click.option("--epsilon", type=float, default=None)
@click.option("--K", "K", type=int, default=None)
@click.option("--eta", type=float, default=None, help="Large step size (default 1/gamma_1).")
@click.option("--step", type=float, default=1e-5, show_default=True, help="Euler step size.")
@click.option("--snapshots", type=int, default=None, help="Recorded points per phase.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def trajectory(instance, optimizer, eta, step, snapshots, fmt, out, **flags):
    """Record the residual trajectory of one optimizer on INSTANCE."""
    spec = load_instance(instance, **flags)
    problem = spec.problem()
    if optimizer == "gf":
        path = gradient_flow(spec.delta0, problem, spec.epsilon, snapshots).trajectory
    elif optimizer == "anneal":
        path = annealed_gd(spec.delta0, problem, eta, spec.K, spec.epsilon, snapshots).trajectory
    else:
        path = euler_flow(spec.delta0, problem, step, spec.epsilon, snapshots).trajectory

    writer = ReportWriter(out)
    name = FILES["trajectory"].format(optimizer=optimizer, fmt=fmt)
    if fmt == "csv":
        writer.write_trajectory_csv(name, path)
    else:
        writer.write_trajectory_json(name, path)
    resolved = spec.model_dump(by_alias=True)
    resolved.update(optimizer=optimizer, eta=eta, step=step, snapshots=snapshots, format=fmt)
    writer.write_manifest("trajectory", resolved)
    click.echo(f"✅ {len(path)} point(s) written to {writer.out_dir / name}")
    return EXIT_OK


@cli.command()
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option("--epsilon", type=float, default=None)
@click.option("--K", "K", type=int, default=None)
@click.option("--eta", type=float, default=None, help="Large step size (default 1/gamma_1).")
@click.option("--span", type=float, default=None, help="Half-width of the box around beta*.")
@click.option("--resolution", type=int, default=None, help="Grid points per axis.")
@click.option("--snapshots", type=int, default=None, help="Recorded points per phase.")
@click.option("--format", "fmt", type=click.Choice(["svg", "csv"]), default="svg", show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def landscape(instance, eta, span, resolution, snapshots, fmt, out, **flags):
    """Write the loss grid (and, for svg, the figure) for a 2-D INSTANCE."""
    spec = load_instance(instance, **flags)
    problem = spec.problem()
    span = default_span(problem, spec.delta0) if span is None else span
    grid = landscape_grid(problem, span, resolution)

    writer = ReportWriter(out)
    writer.write_csv(FILES["landscape_grid"], ["beta_1", "beta_2", "train_loss", "test_loss"], grid.rows())
    if fmt == "svg":
        gf = gradient_flow(spec.delta0, problem, spec.epsilon, snapshots)
        agd = annealed_gd(spec.delta0, problem, eta, spec.K, spec.epsilon, snapshots)
        figure = render_landscape(problem, grid, spec.epsilon, gf.trajectory, agd.trajectory)
        writer.write_figure(FILES["landscape_figure"], lambda path: save_svg(figure, path))
    resolved = spec.model_dump(by_alias=True)
    resolved.update(eta=eta, span=span, resolution=resolution, snapshots=snapshots, format=fmt)
    writer.write_manifest("landscape", resolved)
    click.echo(f"✅ Landscape written to {writer.out_dir}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command and return its exit code."""
    configure_logging()
    try:
        code = cli.main(args=argv, prog_name="lrsched", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_USAGE
    except (ConfigError, MalformedInputError) as e:
        click.echo(f"❌ {e}", err=True)
        return EXIT_USAGE
    except LemmaInapplicableError as e:
        click.echo(f"⏭️  {e}", err=True)
        return EXIT_INAPPLICABLE
    except BoundViolationError as e:
        click.echo(f"❌ {e}", err=True)
        return EXIT_ASSERTION
    except LrSchedError as e:
        logger.exception("Run failed")
        click.echo(f"❌ {e}", err=True)
        return EXIT_USAGE
    return int(code or 0)


if __name__ == "__main__":
    sys.exit(main())
