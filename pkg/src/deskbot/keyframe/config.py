"""Matching / registration thresholds, collected in one place."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class MatcherConfig:
    cosine_threshold: float = 0.15  # max descriptor cosine distance
    ratio_threshold: float = 0.5  # Lowe-style best/second distance ratio
    consistency_epsilon: float = 0.015  # m, pairwise euclidean agreement
    ransac_iterations: int = 500
    ransac_inlier_radius: float = 0.01  # m
    min_inliers: int = 12
    max_rms: float = 0.01  # m
    degenerate_tolerance: float = 1e-4  # m, collinearity singular value
    ransac_seed: int = 0
    brute_force: bool = False  # disable the bucketed candidate search
