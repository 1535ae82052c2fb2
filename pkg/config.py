"""
Configuration for the learning-rate schedule simulator.
Update these settings to change defaults for experiments and outputs.
"""

import os

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

TOOL_VERSION = "0.1.0"

# Experiment defaults (mirror the two-sample-direction regression example)
EXPERIMENT_DEFAULTS = {
    "alpha": 0.01,  # slack in the gradient-flow lower bound, 0 < alpha < 1
    "epsilon": 0.01,  # early-stopping train loss, 0 < epsilon < 1
    "K": 10,  # large-step gradient descent steps before annealing
    "n": 3,  # samples per dataset
    "dim": 2,  # sample directions {e_1, e_2}
    "trials": 10000,  # Monte Carlo trials
    "seed": 7,  # 64-bit unsigned
}

# Numerical tolerances
NUMERICS = {
    "top_eigenspace_rtol": 1e-12,  # gamma_i / gamma_1 in [1 - rtol, 1] counts as top eigenspace
    "commutation_atol": 1e-8,  # max |Sigma Sigma_hat - Sigma_hat Sigma| for joint diagonalization
    "orthonormal_atol": 1e-10,  # max |U^T U - I|
    "rank_rtol": 1e-12,  # eigenvalues below rtol * max are treated as zero
    "stop_time_rtol": 1e-12,  # |train loss - epsilon| <= rtol * max(1, epsilon)
    "stop_time_xtol": 1e-15,  # absolute tolerance on T for the root search
    "stop_time_max_iterations": 200,  # root-search iterations
    "stop_time_max_doublings": 2048,  # bracket growth limit
    "bound_slack": 1e-9,  # slack when checking analytic bounds
    "degenerate_equality": 1e-10,  # |gf_loss - agd_loss| <= tol * max(1, gf_loss)
    "ratio_slack": 1e-6,  # relative slack on the claim ratio floor
    "euler_block": 16384,  # Euler steps evaluated per vectorized block
}

# Output settings
OUTPUT_CONFIG = {
    "out_dir": os.getenv("LRSCHED_OUT_DIR", "out"),
    "log_level": os.getenv("LRSCHED_LOG_LEVEL", "WARNING"),
    "snapshots": 256,  # trajectory points per phase
    "files": {
        "claim_summary": "claim_summary.json",
        "claim_trials": "claim_trials.csv",
        "montecarlo_summary": "montecarlo_summary.json",
        "montecarlo_trials": "montecarlo_trials.csv",
        "lemma_report": "lemma_report.json",
        "trajectory": "trajectory_{optimizer}.{fmt}",
        "landscape_grid": "landscape_grid.csv",
        "landscape_figure": "landscape.svg",
        "manifest": "manifest_{command}.json",
    },
    "landscape": {
        "resolution": 101,  # grid points per axis
        "panel_inches": 6.0,  # 600x600 px per panel at 100 dpi
        "dpi": 100,
        "levels": 12,  # contour levels per panel besides epsilon
    },
}
