"""Fit spheres and capsules over occupied voxels for QP collision rows."""

from __future__ import annotations

import numpy as np

from ..geomkin import Capsule, Sphere
from ..voxelmap import VoxelMap


def fit_collision_primitives(vmap: VoxelMap, max_shapes: int = 256,
                             aabb=None, exclude_aabbs=(),
                             capture_radius: float | None = None):
    """Greedy PCA line-growing: capsules along locally linear voxel runs,
    sphere fallback for isolated clumps.

    Every occupied voxel center (within aabb, outside exclusions) ends up
    inside at least one returned shape.
    """
    if len(vmap) == 0:
        return []
    centers = vmap.centers()
    keep = np.ones(len(centers), dtype=bool)
    if aabb is not None:
        lo, hi = np.asarray(aabb[0], float), np.asarray(aabb[1], float)
        keep &= np.all((centers >= lo) & (centers <= hi), axis=1)
    for lo, hi in exclude_aabbs:
        inside = np.all((centers >= np.asarray(lo)) & (centers <= np.asarray(hi)), axis=1)
        keep &= ~inside
    pts = centers[keep]
    if len(pts) == 0:
        return []
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
    pts = pts[order]

    res = vmap.resolution
    r_vox = res * np.sqrt(3) / 2
    r_grow = capture_radius if capture_radius is not None else 2.5 * res
    shapes = []
    uncovered = np.ones(len(pts), dtype=bool)
    while uncovered.any():
        if len(shapes) >= max_shapes - 1:
            # last shape must cover everything left: bounding sphere
            rem = pts[uncovered]
            c = rem.mean(axis=0)
            r = float(np.linalg.norm(rem - c, axis=1).max()) + r_vox
            shapes.append(Sphere(tuple(c), r))
            break
        seed_idx = int(np.argmax(uncovered))
        seed = pts[seed_idx]
        d_seed = np.linalg.norm(pts - seed, axis=1)
        local = uncovered & (d_seed <= 3 * r_grow)
        cluster = pts[local]
        if len(cluster) >= 3:
            d = cluster - cluster.mean(axis=0)
            _, s, vt = np.linalg.svd(d, full_matrices=False)
            u = vt[0]
        else:
            u = np.array([1.0, 0.0, 0.0])
        # grab every uncovered point within the capsule corridor
        rel = pts - seed
        proj = rel @ u
        perp = np.linalg.norm(rel - np.outer(proj, u), axis=1)
        corridor = uncovered & (perp <= r_grow)
        span = proj[corridor]
        if span.max() - span.min() < res:
            ball = uncovered & (d_seed <= r_grow)
            c = pts[ball].mean(axis=0)
            r = float(np.linalg.norm(pts[ball] - c, axis=1).max()) + r_vox
            shapes.append(Sphere(tuple(c), max(r, r_vox)))
            covered = _inside_sphere(pts, shapes[-1])
        else:
            a = seed + u * float(span.min())
            b = seed + u * float(span.max())
            r = float(perp[corridor].max()) + r_vox
            shapes.append(Capsule(tuple(a), tuple(b), r))
            covered = _inside_capsule(pts, shapes[-1])
        uncovered &= ~covered
    return shapes


def _inside_sphere(pts, s: Sphere) -> np.ndarray:
    return np.linalg.norm(pts - np.asarray(s.center), axis=1) <= s.radius + 1e-9


def _inside_capsule(pts, c: Capsule) -> np.ndarray:
    a, b = np.asarray(c.a), np.asarray(c.b)
    ab = b - a
    t = np.clip((pts - a) @ ab / (ab @ ab), 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.linalg.norm(pts - closest, axis=1) <= c.radius + 1e-9


def coverage_gaps(vmap: VoxelMap, shapes, aabb=None, exclude_aabbs=()) -> int:
    """Occupied voxel centers not inside any shape (exact check)."""
    if len(vmap) == 0:
        return 0
    centers = vmap.centers()
    keep = np.ones(len(centers), dtype=bool)
    if aabb is not None:
        lo, hi = np.asarray(aabb[0], float), np.asarray(aabb[1], float)
        keep &= np.all((centers >= lo) & (centers <= hi), axis=1)
    for lo, hi in exclude_aabbs:
        inside = np.all((centers >= np.asarray(lo)) & (centers <= np.asarray(hi)), axis=1)
        keep &= ~inside
    pts = centers[keep]
    if len(pts) == 0:
        return 0
    covered = np.zeros(len(pts), dtype=bool)
    for s in shapes:
        if isinstance(s, Sphere):
            covered |= _inside_sphere(pts, s)
        else:
            covered |= _inside_capsule(pts, s)
    return int((~covered).sum())
