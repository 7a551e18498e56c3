"""Cloud-to-descriptor pipeline wired through a Config."""

from __future__ import annotations

import numpy as np

from .bev import make_bev
from .cloud import PointCloud, crop_window, remove_ground
from .config import Config
from .pose import Se2Pose, estimate_pose_stage1, extract_compact_2d
from .spectrum import log_spectrum, polar_unroll


def preprocess(cloud: PointCloud, cfg: Config) -> PointCloud:
    """Window crop, then ground and outlier removal."""
    cropped = crop_window(cloud, cfg.window_m)
    return remove_ground(cropped, cfg.ground_cell_m, cfg.ground_margin_m)


def describe(cloud: PointCloud, cfg: Config) -> np.ndarray:
    """Full descriptor pipeline: preprocess, project, transform, unroll."""
    bev = make_bev(preprocess(cloud, cfg), cfg.window_m, cfg.grid_size)
    return polar_unroll(log_spectrum(bev), cfg.crop_size, cfg.radial_bins, cfg.angular_bins)


def compact_2d(cloud: PointCloud, cfg: Config):
    """Preprocess and condense a cloud for planar registration."""
    return extract_compact_2d(
        preprocess(cloud, cfg),
        cfg.coarse_grid_m,
        cfg.cell_cap,
        cfg.voxel_m,
        cfg.normal_neighbors,
        cfg.max_flatness_ratio,
    )


def stage1_pose(
    query: PointCloud, candidate: PointCloud, best_shift: int, cfg: Config
) -> Se2Pose:
    """Stage-1 relative pose between two raw clouds given the descriptor shift."""
    return estimate_pose_stage1(
        compact_2d(query, cfg),
        compact_2d(candidate, cfg),
        best_shift,
        cfg.angular_bins,
        max_iters=cfg.nicp_max_iters,
        gate_start_m=cfg.nicp_gate_start_m,
        gate_end_m=cfg.nicp_gate_end_m,
    )
