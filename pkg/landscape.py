#!/usr/bin/env python3
"""
Two-dimensional loss landscapes in parameter coordinates.

A grid of train and test losses around beta*, and a three-panel figure:
train level sets with the gradient flow path, train level sets with the
annealed path, and test level sets with both endpoints. The epsilon train
level set is drawn as an explicit ellipse.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Ellipse  # noqa: E402

from config import OUTPUT_CONFIG  # noqa: E402
from errors import MalformedInputError  # noqa: E402
from optimizers import Trajectory  # noqa: E402
from quadratic_core import DiagonalProblem  # noqa: E402

EPSILON_GID = "epsilon-level"


@dataclass(frozen=True)
class LandscapeGrid:
    """Losses sampled on a regular grid; train[i, j] is at (beta_1[j], beta_2[i])."""

    beta_1: np.ndarray
    beta_2: np.ndarray
    train: np.ndarray
    test: np.ndarray

    def rows(self) -> Iterator[Tuple[float, float, float, float]]:
        """CSV rows beta_1,beta_2,train_loss,test_loss with beta_1 varying fastest."""
        for i, b2 in enumerate(self.beta_2):
            for j, b1 in enumerate(self.beta_1):
                yield float(b1), float(b2), float(self.train[i, j]), float(self.test[i, j])


def _check_planar(problem: DiagonalProblem) -> None:
    if problem.dim != 2 or problem.parameter_dim != 2:
        raise MalformedInputError(
            f"landscapes are drawn in two dimensions, problem has {problem.dim} "
            f"eigen-coordinates and {problem.parameter_dim} parameters"
        )


def default_span(problem: DiagonalProblem, delta0) -> float:
    """Half-width that keeps the starting point inside the box with some margin."""
    radius = float(np.max(np.abs(np.asarray(delta0, dtype=np.float64))))
    return 1.25 * radius if radius > 0 else 1.0


def landscape_grid(problem: DiagonalProblem, span: float, resolution: Optional[int] = None) -> LandscapeGrid:
    """Train and test losses on the box beta* +/- span, resolution points per side."""
    _check_planar(problem)
    resolution = OUTPUT_CONFIG["landscape"]["resolution"] if resolution is None else int(resolution)
    if not span > 0:
        raise MalformedInputError(f"span must be positive, got {span}")
    if resolution < 2:
        raise MalformedInputError(f"resolution must be at least 2, got {resolution}")

    center = problem.to_parameters(np.zeros(2))
    beta_1 = center[0] + np.linspace(-span, span, resolution)
    beta_2 = center[1] + np.linspace(-span, span, resolution)
    b1, b2 = np.meshgrid(beta_1, beta_2)
    offsets = np.stack([b1 - center[0], b2 - center[1]], axis=-1)
    basis = np.eye(2) if problem.basis is None else problem.basis
    delta = offsets @ basis
    return LandscapeGrid(
        beta_1=beta_1,
        beta_2=beta_2,
        train=np.sum(problem.gamma * delta**2, axis=-1),
        test=np.sum(problem.lam * delta**2, axis=-1),
    )


def epsilon_ellipse(problem: DiagonalProblem, epsilon: float) -> Tuple[np.ndarray, float, float, float]:
    """Center, full width, full height and angle (degrees) of the epsilon train level set.

    The semi-axes are sqrt(epsilon / gamma_i) along the basis columns.
    """
    _check_planar(problem)
    if not epsilon > 0:
        raise MalformedInputError(f"epsilon must be positive, got {epsilon}")
    basis = np.eye(2) if problem.basis is None else problem.basis
    width, height = 2.0 * np.sqrt(epsilon / problem.gamma)
    angle = float(np.degrees(np.arctan2(basis[1, 0], basis[0, 0])))
    return problem.to_parameters(np.zeros(2)), float(width), float(height), angle


def _levels(values: np.ndarray, count: int) -> np.ndarray:
    top = float(np.max(values))
    positive = values[values > 0]
    if top <= 0 or positive.size == 0:
        return np.array([1.0])
    bottom = max(float(np.min(positive)), top * 1e-6)
    return np.unique(np.geomspace(bottom, top, count))


def _draw_panel(ax, grid: LandscapeGrid, values: np.ndarray, title: str, levels: int) -> None:
    ax.contour(grid.beta_1, grid.beta_2, values, levels=_levels(values, levels), cmap="viridis", linewidths=0.8)
    ax.set_title(title)
    ax.set_xlabel("beta_1")
    ax.set_ylabel("beta_2")
    ax.set_aspect("equal", adjustable="box")


def _draw_path(ax, problem: DiagonalProblem, trajectory: Trajectory, color: str, label: str) -> None:
    path = trajectory.parameters(problem)
    ax.plot(path[:, 0], path[:, 1], color=color, marker=".", markersize=3, linewidth=1.2, label=label)
    ax.plot(path[-1, 0], path[-1, 1], color=color, marker="*", markersize=10, linestyle="none")


def _draw_epsilon(ax, problem: DiagonalProblem, epsilon: float) -> None:
    center, width, height, angle = epsilon_ellipse(problem, epsilon)
    ax.add_patch(
        Ellipse(
            (float(center[0]), float(center[1])),
            width,
            height,
            angle=angle,
            fill=False,
            edgecolor="crimson",
            linewidth=1.5,
            gid=EPSILON_GID,
        )
    )


def render_landscape(
    problem: DiagonalProblem,
    grid: LandscapeGrid,
    epsilon: float,
    gf_path: Trajectory,
    agd_path: Trajectory,
):
    """Three-panel figure; the caller saves and closes it."""
    settings = OUTPUT_CONFIG["landscape"]
    inches = settings["panel_inches"]
    fig, axes = plt.subplots(1, 3, figsize=(3 * inches, inches), dpi=settings["dpi"])

    _draw_panel(axes[0], grid, grid.train, "Train loss, gradient flow", settings["levels"])
    _draw_path(axes[0], problem, gf_path, "tab:blue", "gradient flow")
    _draw_panel(axes[1], grid, grid.train, "Train loss, annealed descent", settings["levels"])
    _draw_path(axes[1], problem, agd_path, "tab:orange", "annealed descent")
    for ax in axes[:2]:
        _draw_epsilon(ax, problem, epsilon)

    _draw_panel(axes[2], grid, grid.test, "Test loss", settings["levels"])
    gf_end = gf_path.parameters(problem)[-1]
    agd_end = agd_path.parameters(problem)[-1]
    axes[2].plot(gf_end[0], gf_end[1], color="tab:blue", marker="*", markersize=10, linestyle="none", label="gradient flow")
    axes[2].plot(agd_end[0], agd_end[1], color="tab:orange", marker="*", markersize=10, linestyle="none", label="annealed descent")

    for ax in axes:
        ax.set_xlim(grid.beta_1[0], grid.beta_1[-1])
        ax.set_ylim(grid.beta_2[0], grid.beta_2[-1])
        ax.legend(loc="upper left", fontsize="small")
    fig.tight_layout()
    return fig


def save_svg(fig, path: Path) -> None:
    """Write the figure as SVG without a timestamp and with stable element ids, then close it."""
    with matplotlib.rc_context({"svg.hashsalt": "lrsched", "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
