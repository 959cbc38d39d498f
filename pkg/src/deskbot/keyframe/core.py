"""Keyframe capture, correspondence matching, inlier filtering, and 6-DOF
delta-pose estimation (RANSAC over 3-point rigid fits + damped Gauss-Newton).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geomkin import Pose
from ..geomkin.pose import _skew
from .config import MatcherConfig
from ..percept import PinholeIntrinsics, RenderedFrame

STATUS_OK = "ok"
STATUS_INSUFFICIENT = "insufficient-matches"
STATUS_DEGENERATE = "degenerate"


class InsufficientDepthError(ValueError):
    pass


@dataclass(frozen=True)
class Keyframe:
    id: str
    descriptors: np.ndarray  # (N, D) float32
    points: np.ndarray  # (N, 3) float64, world frame at capture
    pixels: np.ndarray  # (N, 2) int32, (u, v)
    depths: np.ndarray  # (N,) float64
    mask: np.ndarray  # (H, W) bool
    camera_pose: Pose
    intrinsics: PinholeIntrinsics

    @property
    def size(self) -> int:
        return len(self.descriptors)


@dataclass(frozen=True)
class CorrespondenceSet:
    keyframe_id: str
    ref_points: np.ndarray  # (K, 3)
    live_points: np.ndarray  # (K, 3)
    ref_pixels: np.ndarray  # (K, 2)
    live_pixels: np.ndarray  # (K, 2)
    distances: np.ndarray  # (K,) descriptor cosine distance

    def __len__(self) -> int:
        return len(self.ref_points)

    def subset(self, idx) -> "CorrespondenceSet":
        return CorrespondenceSet(
            self.keyframe_id,
            self.ref_points[idx],
            self.live_points[idx],
            self.ref_pixels[idx],
            self.live_pixels[idx],
            self.distances[idx],
        )

    @staticmethod
    def empty(keyframe_id: str = "") -> "CorrespondenceSet":
        return CorrespondenceSet(
            keyframe_id,
            np.zeros((0, 3)), np.zeros((0, 3)),
            np.zeros((0, 2), dtype=np.int32), np.zeros((0, 2), dtype=np.int32),
            np.zeros(0),
        )


@dataclass(frozen=True)
class DeltaPose:
    pose: Pose  # maps taught-frame coordinates to live-frame
    inliers: int
    rms: float  # meters
    status: str

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    @staticmethod
    def failed(status: str) -> "DeltaPose":
        return DeltaPose(Pose.identity(), 0, math.inf, status)


def capture(frame: RenderedFrame, mask: np.ndarray, keyframe_id: str = "kf",
            max_descriptors: int = 5000) -> Keyframe:
    """Store masked embeddings + depth, grid-subsampled to the cap."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (frame.height, frame.width):
        raise ValueError("mask shape mismatch")
    if not mask.any():
        raise ValueError("empty mask")
    valid = mask & frame.valid
    if valid.sum() < 0.5 * mask.sum():
        raise InsufficientDepthError(
            f"only {int(valid.sum())}/{int(mask.sum())} mask pixels have depth"
        )
    vv, uu = np.nonzero(valid)
    stride = 1
    while len(vv) // (stride * stride) > max_descriptors:
        stride += 1
    keep = (uu % stride == 0) & (vv % stride == 0)
    # a coarse stride can undershoot badly on sparse masks; densify if so
    if keep.sum() > max_descriptors:
        idx = np.nonzero(keep)[0][:max_descriptors]
        keep = np.zeros_like(keep)
        keep[idx] = True
    uu, vv = uu[keep], vv[keep]
    pts = frame.backproject()[vv, uu]
    return Keyframe(
        id=keyframe_id,
        descriptors=np.ascontiguousarray(frame.embedding[vv, uu]),
        points=np.ascontiguousarray(pts),
        pixels=np.ascontiguousarray(np.stack([uu, vv], axis=1).astype(np.int32)),
        depths=np.ascontiguousarray(frame.depth[vv, uu]),
        mask=mask.copy(),
        camera_pose=frame.camera_pose,
        intrinsics=frame.intrinsics,
    )


def _bucket_keys(desc: np.ndarray) -> np.ndarray:
    """Top-|component| bucket id per descriptor: argmax dim * 2 + sign."""
    a = np.abs(desc)
    top = a.argmax(axis=1)
    sign = desc[np.arange(len(desc)), top] < 0
    return (top * 2 + sign).astype(np.int32)


def _bucket_keys2(desc: np.ndarray) -> np.ndarray:
    """Second-strongest-component bucket id (probe fallback)."""
    a = np.abs(desc).copy()
    top = a.argmax(axis=1)
    a[np.arange(len(desc)), top] = -1.0
    second = a.argmax(axis=1)
    sign = desc[np.arange(len(desc)), second] < 0
    return (second * 2 + sign).astype(np.int32)


def match(frame: RenderedFrame, kf: Keyframe, config: MatcherConfig | None = None
          ) -> CorrespondenceSet:
    """Mutual nearest neighbours in descriptor space with ratio test.

    Candidate search is accelerated by coarse bucketing on the strongest
    descriptor component (probing the top-2 buckets per query); set
    config.brute_force for the exact search.
    """
    config = config or MatcherConfig()
    if frame.embedding.shape[-1] != kf.descriptors.shape[-1]:
        raise ValueError("embedding dimension mismatch")
    valid = frame.valid
    if not valid.any() or kf.size == 0:
        return CorrespondenceSet.empty(kf.id)
    vv, uu = np.nonzero(valid)
    F = frame.embedding[vv, uu]  # (M, D) float32
    D = kf.descriptors  # (N, D)
    M, N = len(F), len(D)

    best = np.full(M, -2.0, dtype=np.float32)  # best similarity per query
    second = np.full(M, -2.0, dtype=np.float32)
    best_j = np.full(M, -1, dtype=np.int64)
    col_best = np.full(N, -2.0, dtype=np.float32)
    col_best_i = np.full(N, -1, dtype=np.int64)

    def _accumulate(rows: np.ndarray, cols: np.ndarray):
        S = F[rows] @ D[cols].T  # (r, c) similarities
        cb = S.max(axis=0)
        cbi = S.argmax(axis=0)
        better = cb > col_best[cols]
        col_best[cols[better]] = cb[better]
        col_best_i[cols[better]] = rows[cbi[better]]
        loc = S.argmax(axis=1)
        sims = S[np.arange(len(rows)), loc]
        js = cols[loc]
        S[np.arange(len(rows)), loc] = -2.0
        sims2 = S.max(axis=1) if S.shape[1] > 1 else np.full(len(rows), -2.0, np.float32)
        improve = sims > best[rows]
        new_second = np.where(improve & (best_j[rows] != js), best[rows], second[rows])
        new_second = np.maximum(new_second, sims2)
        also = (~improve) & (sims > second[rows]) & (js != best_j[rows])
        new_second = np.where(also, sims, new_second)
        second[rows] = new_second
        best_j[rows] = np.where(improve, js, best_j[rows])
        best[rows] = np.where(improve, sims, best[rows])

    if config.brute_force:
        chunk = 2048
        for s0 in range(0, M, chunk):
            _accumulate(np.arange(s0, min(M, s0 + chunk)), np.arange(N))
    else:
        kf_keys = _bucket_keys(D)
        q1 = _bucket_keys(F)
        q2 = _bucket_keys2(F)
        for b in np.unique(kf_keys):
            cols = np.nonzero(kf_keys == b)[0]
            rows = np.nonzero((q1 == b) | (q2 == b))[0]
            if len(rows):
                _accumulate(rows, cols)

    qi = np.arange(M)
    has = best_j >= 0
    dist = 1.0 - best.astype(np.float64)
    dist2 = 1.0 - second.astype(np.float64)
    mutual = has & (col_best_i[np.clip(best_j, 0, N - 1)] == qi)
    accept = mutual & (dist <= config.cosine_threshold)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dist2 > 1e-12, dist / dist2, 0.0)
    accept &= ratio <= config.ratio_threshold
    sel = np.nonzero(accept)[0]
    if len(sel) == 0:
        return CorrespondenceSet.empty(kf.id)
    j = best_j[sel]
    live_pts = frame.backproject()[vv[sel], uu[sel]]
    return CorrespondenceSet(
        keyframe_id=kf.id,
        ref_points=kf.points[j],
        live_points=live_pts,
        ref_pixels=kf.pixels[j],
        live_pixels=np.stack([uu[sel], vv[sel]], axis=1).astype(np.int32),
        distances=dist[sel],
    )


def filter_inliers_euclidean(c: CorrespondenceSet, epsilon: float = 0.015,
                             max_pairs: int = 1500) -> CorrespondenceSet:
    """Largest pairwise-consistent subset (greedy, highest degree first).

    Consistency of pair (i, j): the reference and live inter-point
    distances agree within epsilon.
    """
    k = len(c)
    if k == 0:
        return c
    if k > max_pairs:  # keep the strongest descriptors for the O(k^2) graph
        order = np.argsort(c.distances, kind="stable")[:max_pairs]
        c = c.subset(np.sort(order))
        k = max_pairs
    dp = np.linalg.norm(c.ref_points[:, None, :] - c.ref_points[None, :, :], axis=-1)
    dq = np.linalg.norm(c.live_points[:, None, :] - c.live_points[None, :, :], axis=-1)
    consistent = np.abs(dp - dq) <= epsilon
    np.fill_diagonal(consistent, True)
    degree = consistent.sum(axis=1)
    order = np.argsort(-degree, kind="stable")
    chosen: list[int] = []
    candidate = np.ones(k, dtype=bool)
    for idx in order:
        if candidate[idx]:
            chosen.append(int(idx))
            candidate &= consistent[idx]
    chosen.sort()
    return c.subset(np.array(chosen, dtype=int))


def _umeyama_3pt(p: np.ndarray, q: np.ndarray):
    """Closed-form rigid fit q ~ R p + t (no scaling)."""
    pc = p.mean(axis=0)
    qc = q.mean(axis=0)
    H = (p - pc).T @ (q - qc)
    U, _, Vt = np.linalg.svd(H)
    S = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ S @ U.T
    t = qc - R @ pc
    return R, t


def _collinear(points: np.ndarray, tol: float = 1e-4) -> bool:
    if len(points) < 3:
        return True
    d = points - points.mean(axis=0)
    s = np.linalg.svd(d, compute_uv=False)
    return s[1] <= tol


def solve_pose(c: CorrespondenceSet, config: MatcherConfig | None = None) -> DeltaPose:
    """RANSAC over minimal 3-point rigid fits, then damped Gauss-Newton
    refinement over the consensus set."""
    config = config or MatcherConfig()
    k = len(c)
    if k < 3:
        return DeltaPose.failed(STATUS_INSUFFICIENT)
    p = c.ref_points
    q = c.live_points
    rng = np.random.default_rng(config.ransac_seed)
    best_count = 0
    best_rms = math.inf
    best_Rt = None
    radius = config.ransac_inlier_radius
    for _ in range(config.ransac_iterations):
        idx = rng.choice(k, size=3, replace=False)
        tri = p[idx]
        if _collinear(tri, 1e-6):
            continue
        R, t = _umeyama_3pt(tri, q[idx])
        r = q - (p @ R.T + t)
        err = np.linalg.norm(r, axis=1)
        inl = err <= radius
        count = int(inl.sum())
        if count < 3:
            continue
        rms = float(np.sqrt(np.mean(err[inl] ** 2)))
        if count > best_count or (count == best_count and rms < best_rms):
            best_count, best_rms, best_Rt = count, rms, (R, t, inl)
    if best_Rt is None:
        if _collinear(p, config.degenerate_tolerance):
            return DeltaPose.failed(STATUS_DEGENERATE)
        return DeltaPose.failed(STATUS_INSUFFICIENT)
    R, t, inl = best_Rt
    if _collinear(p[inl], config.degenerate_tolerance):
        return DeltaPose.failed(STATUS_DEGENERATE)

    pose = Pose.from_matrix(np.vstack([np.column_stack([R, t]), [0, 0, 0, 1]]))
    pose, rms = _refine_gauss_newton(p[inl], q[inl], pose)

    # final consensus against the refined pose
    err = np.linalg.norm(q - (p @ pose.rotation_matrix().T + pose.t), axis=1)
    inliers = int((err <= radius).sum())
    status = STATUS_OK
    if inliers < config.min_inliers or rms > config.max_rms:
        status = STATUS_INSUFFICIENT
    return DeltaPose(pose, inliers, rms, status)


def _refine_gauss_newton(p: np.ndarray, q: np.ndarray, pose: Pose,
                         iterations: int = 20):
    """LM-damped Gauss-Newton on 3-D point residuals; left-multiplied
    exponential-coordinate increments.  Never accepts a cost increase."""
    lam = 1e-6

    def cost(ps: Pose) -> float:
        r = q - (p @ ps.rotation_matrix().T + ps.t)
        return float(np.mean(np.sum(r * r, axis=1)))

    current = cost(pose)
    for _ in range(iterations):
        R = pose.rotation_matrix()
        pred = p @ R.T + pose.t
        r = (q - pred).reshape(-1)
        J = np.zeros((len(p) * 3, 6))
        for i in range(len(p)):
            J[3 * i : 3 * i + 3, :3] = np.eye(3)
            J[3 * i : 3 * i + 3, 3:] = -_skew(pred[i])
        JtJ = J.T @ J
        Jtr = J.T @ r
        step = None
        for _ in range(8):
            try:
                xi = np.linalg.solve(JtJ + lam * np.diag(np.diag(JtJ)) + 1e-12 * np.eye(6), Jtr)
            except np.linalg.LinAlgError:
                break
            candidate = Pose.exp(xi).compose(pose)
            c_new = cost(candidate)
            if c_new <= current:
                step = (candidate, c_new)
                lam = max(lam * 0.3, 1e-9)
                break
            lam *= 10.0
        if step is None:
            break
        pose, new_cost = step
        if current - new_cost < 1e-16:
            current = new_cost
            break
        current = new_cost
    return pose, float(np.sqrt(current))


def select_best(frame: RenderedFrame, kfs: list[Keyframe],
                config: MatcherConfig | None = None):
    """Best keyframe by post-filter inlier count; ties by rms then order.

    Returns (keyframe id, DeltaPose).
    """
    if not kfs:
        raise ValueError("empty keyframe list")
    config = config or MatcherConfig()
    results = []
    for i, kf in enumerate(kfs):
        filtered = filter_inliers_euclidean(match(frame, kf, config),
                                            config.consistency_epsilon)
        delta = solve_pose(filtered, config)
        rms = delta.rms if math.isfinite(delta.rms) else math.inf
        results.append((-len(filtered), rms, i, kf.id, delta))
    results.sort(key=lambda r: (r[0], r[1], r[2]))
    _, _, _, kf_id, delta = results[0]
    return kf_id, delta
