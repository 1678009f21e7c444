"""Holographic-surface radar simulation, point clouds and particle-filter SLAM."""

from .config import RunConfig, load_config
from .pipeline import compute_rmse, run_comparison, run_slam

__all__ = ["RunConfig", "compute_rmse", "load_config", "run_comparison", "run_slam"]
