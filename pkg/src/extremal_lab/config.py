"""Default tolerances and tool conventions, kept in one table."""

import os

DEFAULTS = {
    # extremal
    "steps": 512,
    "min_steps": 16,
    "shoot_tol": 1e-9,
    "shoot_max_iter": 60,
    "shoot_fd_step": 1e-6,
    "shoot_max_halvings": 8,
    "shoot_rank_rtol": 1e-7,
    "nontrivial_tol": 1e-12,
    # control elimination
    "newton_max_iter": 50,
    "newton_tol": 1e-12,
    "curvature_tol": 1e-9,
    # zero testing
    "zero_points": 20,
    "zero_tol": 1e-9,
    "violation_threshold": 1e-6,
    # noether
    "noether_fd_step": 1e-4,
    "noether_fd_rtol": 1e-6,
    # transform
    "zero_level_tol": 1e-6,
    "v_integral_tol": 1e-9,
    "v_normalize_band": 0.01,
    "positivity_samples": 50,
    # regularity
    "samples": 10_000,
    "min_samples": 1_000,
    "c_grid_step": 0.25,
    "c_grid_max": 32.0,
    "trend_scales": (1, 2, 4),
    "trend_factor": 4.0,
    "rank_samples": 50,
    "rank_tol": 1e-9,
    "ray_directions": 16,
    "ray_sigmas": (10.0, 100.0, 1000.0),
    "ray_growth": 10.0,
    "theta_ratio_floor": 1e3,
    "convexity_tol": 1e-9,
}


def seed():
    """Sampling seed; EXTREMAL_LAB_SEED overrides the default 0."""
    return int(os.environ.get("EXTREMAL_LAB_SEED", "0"))
