"""CPU ray-cast renderer producing RGB-D frames with dense per-pixel
embeddings from a deterministic procedural oracle.

The correspondence embedding of a pixel is a pure function of the hit
point's object-local surface coordinate: unit vectors hashed from
(object id, material, lattice node) are trilinearly blended on a 30 mm
lattice, so any view of a given surface point maps to the same embedding
while nearby points stay similar enough for nearest-neighbour matching.
Noise knobs re-introduce controlled imperfection.  Depth is the euclidean
range along the pixel ray (0 = no hit).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from ..geomkin import Capsule, Pose, Sphere
from .scene import Box, SimScene

SURFACE_SNAP = 0.0005  # m; fine snap keeps the oracle bit-stable
LATTICE_PITCH = 0.03  # m; descriptor correlation length
EMBED_DIM = 16
SEMANTIC_DIM = 8


@dataclass(frozen=True)
class PinholeIntrinsics:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    @staticmethod
    def from_fov(width: int, height: int, fov_h_deg: float = 110.0,
                 fov_v_deg: float = 80.0) -> "PinholeIntrinsics":
        fx = (width / 2.0) / math.tan(math.radians(fov_h_deg) / 2.0)
        fy = (height / 2.0) / math.tan(math.radians(fov_v_deg) / 2.0)
        return PinholeIntrinsics(width, height, fx, fy, (width - 1) / 2.0, (height - 1) / 2.0)

    def ray_directions(self) -> np.ndarray:
        """(H, W, 3) unit rays in the camera frame (+z optical axis)."""
        u = (np.arange(self.width) - self.cx) / self.fx
        v = (np.arange(self.height) - self.cy) / self.fy
        uu, vv = np.meshgrid(u, v)
        d = np.stack([uu, vv, np.ones_like(uu)], axis=-1)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def project(self, pts_cam: np.ndarray):
        """Camera-frame points -> (u, v, range)."""
        z = pts_cam[..., 2]
        u = pts_cam[..., 0] / z * self.fx + self.cx
        v = pts_cam[..., 1] / z * self.fy + self.cy
        return u, v, np.linalg.norm(pts_cam, axis=-1)


@dataclass(frozen=True)
class OracleParams:
    view_noise: float = 0.0  # embedding drift per rad of view-angle change
    lighting_noise: float = 0.0  # drift per unit |illumination - 1|
    dropout: float = 0.0  # fraction of pixels with corrupted embedding
    seed: int = 0

    def __post_init__(self):
        if self.view_noise < 0 or self.lighting_noise < 0:
            raise ValueError("noise must be >= 0")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must be in [0, 1)")


@dataclass(frozen=True)
class RenderedFrame:
    width: int
    height: int
    rgb: np.ndarray  # (H, W, 3) float32 in [0, 1]
    depth: np.ndarray  # (H, W) float64 range along ray, 0 invalid
    embedding: np.ndarray  # (H, W, D) float32, unit per valid pixel
    semantic: np.ndarray  # (H, W, S) float32
    instance: np.ndarray  # (H, W, 2) float32, vector to instance centroid (px)
    camera_pose: Pose
    intrinsics: PinholeIntrinsics
    time: float = 0.0
    object_index: np.ndarray = None  # (H, W) int32 ground-truth hit object, -1 none
    class_image: np.ndarray = None  # (H, W) int32 ground-truth class ids

    @property
    def valid(self) -> np.ndarray:
        return self.depth > 0

    def backproject(self) -> np.ndarray:
        """(H, W, 3) world points for valid pixels (others = origin)."""
        dirs = self.intrinsics.ray_directions()
        dirs_w = dirs @ self.camera_pose.rotation_matrix().T
        return self.camera_pose.t + dirs_w * self.depth[..., None]

    def content_hash(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        for a in (self.rgb, self.depth, self.embedding, self.semantic, self.instance):
            h.update(np.ascontiguousarray(a).tobytes())
        h.update(np.asarray(self.camera_pose.to_list()).tobytes())
        return h.hexdigest()


# -- deterministic hashing ----------------------------------------------------

_SPLIT1 = np.uint64(0x9E3779B97F4A7C15)
_SPLIT2 = np.uint64(0xBF58476D1CE4E5B9)
_SPLIT3 = np.uint64(0x94D049BB133111EB)


def _mix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = (x + _SPLIT1).astype(np.uint64)
        x = ((x ^ (x >> np.uint64(30))) * _SPLIT2).astype(np.uint64)
        x = ((x ^ (x >> np.uint64(27))) * _SPLIT3).astype(np.uint64)
        return x ^ (x >> np.uint64(31))


def _hash_str(s: str) -> np.uint64:
    return np.frombuffer(hashlib.blake2b(s.encode(), digest_size=8).digest(), np.uint64)[0]


def _uniform_pm1(keys: np.ndarray) -> np.ndarray:
    """uint64 keys -> floats in [-1, 1)."""
    return (keys >> np.uint64(11)).astype(np.float64) * (2.0 / 2**53) - 1.0


def _hash_vectors(keys: np.ndarray, dim: int, salt: int) -> np.ndarray:
    """(n,) uint64 -> (n, dim) unit vectors, deterministic."""
    keys = np.atleast_1d(keys).astype(np.uint64)
    out = np.empty((len(keys), dim), dtype=np.float64)
    with np.errstate(over="ignore"):
        for c in range(dim):
            out[:, c] = _uniform_pm1(_mix64(keys ^ np.uint64(salt * 7919 + c + 1)))
    n = np.linalg.norm(out, axis=1, keepdims=True)
    n[n == 0] = 1.0
    return out / n


def class_embedding(class_id: int, dim: int = SEMANTIC_DIM) -> np.ndarray:
    return _hash_vectors(_mix64(np.array([class_id], dtype=np.uint64)), dim, salt=5)[0]


_CORNERS = np.array(
    [[0, 0, 0], [0, 0, 1], [0, 1, 0], [0, 1, 1], [1, 0, 0], [1, 0, 1], [1, 1, 0], [1, 1, 1]],
    dtype=np.int64,
)


def _object_salt(obj_id: str, material: int) -> np.uint64:
    with np.errstate(over="ignore"):
        return _mix64(np.asarray(_hash_str(obj_id) ^ np.uint64(material * 2654435761 + 3)))


def surface_embedding(local_pts: np.ndarray, obj_id: str, material: int,
                      view_dirs: np.ndarray | None = None,
                      params: OracleParams | None = None,
                      illumination: float = 1.0) -> np.ndarray:
    """Embedding of object-local surface points; pure function of its inputs.

    view_dirs (world-frame unit rays) only matter when params carry noise.
    """
    params = params or OracleParams()
    local = np.atleast_2d(np.asarray(local_pts, dtype=float))
    snapped = np.round(local / SURFACE_SNAP) * SURFACE_SNAP
    rel = snapped / LATTICE_PITCH
    base = np.floor(rel).astype(np.int64)
    frac = rel - base
    nodes = base[:, None, :] + _CORNERS[None, :, :]  # (n, 8, 3)
    salt = _object_salt(obj_id, material)
    with np.errstate(over="ignore"):
        key = _mix64(
            nodes[..., 0].view(np.uint64)
            ^ _mix64(nodes[..., 1].view(np.uint64) ^ _mix64(nodes[..., 2].view(np.uint64)))
        ) ^ salt
    uniq, inv = np.unique(key.ravel(), return_inverse=True)
    V = _hash_vectors(uniq, EMBED_DIM, salt=1)[inv].reshape(len(local), 8, EMBED_DIM)
    w = np.ones((len(local), 8))
    for axis in range(3):
        on = _CORNERS[:, axis][None, :].astype(float)
        w *= on * frac[:, axis : axis + 1] + (1 - on) * (1 - frac[:, axis : axis + 1])
    e = (w[..., None] * V).sum(axis=1)
    n = np.linalg.norm(e, axis=1, keepdims=True)
    n[n == 0] = 1.0
    e = e / n

    drift = params.lighting_noise * abs(float(illumination) - 1.0)
    if params.view_noise > 0 or drift > 0:
        cell_key = key[:, 0]  # containing-cell key; constant within a cell
        mag = np.full(len(local), drift)
        if params.view_noise > 0 and view_dirs is not None:
            canon = _hash_vectors(cell_key, 3, salt=2)
            cosang = np.clip(np.einsum("ij,ij->i", canon, np.atleast_2d(view_dirs)), -1, 1)
            mag = mag + params.view_noise * np.arccos(cosang)
        drift_dir = _hash_vectors(cell_key, EMBED_DIM, salt=3)
        e = e + mag[:, None] * drift_dir
        e /= np.linalg.norm(e, axis=1, keepdims=True)
    return e


# -- ray intersections --------------------------------------------------------


def _ray_sphere(o, d, center, radius):
    oc = o - center
    b = np.einsum("ij,ij->i", oc, d)
    c = np.einsum("ij,ij->i", oc, oc) - radius * radius
    disc = b * b - c
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t = -b - sq
    t = np.where(ok & (t > 1e-3), t, np.inf)
    return t


def _ray_capsule(o, d, pa, pb, radius):
    u = pb - pa
    L = np.linalg.norm(u)
    u = u / L
    oa = o - pa
    d_par = d @ u
    o_par = oa @ u
    d_perp = d - d_par[:, None] * u
    o_perp = oa - o_par[:, None] * u
    A = np.einsum("ij,ij->i", d_perp, d_perp)
    B = np.einsum("ij,ij->i", o_perp, d_perp)
    C = np.einsum("ij,ij->i", o_perp, o_perp) - radius * radius
    disc = B * B - A * C
    ok = (disc >= 0) & (A > 1e-12)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t_cyl = np.where(ok, (-B - sq) / np.where(A > 1e-12, A, 1.0), np.inf)
    s = o_par + t_cyl * d_par
    t_cyl = np.where((t_cyl > 1e-3) & (s >= 0) & (s <= L), t_cyl, np.inf)
    t = np.minimum(t_cyl, _ray_sphere(o, d, pa, radius))
    t = np.minimum(t, _ray_sphere(o, d, pb, radius))
    return t


def _ray_box(o, d, R, p, center, half):
    """Box posed by (R, p); center/half in box local frame."""
    ol = (o - p - R @ np.asarray(center)) @ R  # = R.T @ (o - ...)
    dl = d @ R
    h = np.asarray(half)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dl
        t1 = (-h - ol) * inv
        t2 = (h - ol) * inv
    lo = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
    hi = np.where(np.isnan(t2), np.inf, np.maximum(t1, t2))
    par_miss = (np.abs(dl) < 1e-12) & (np.abs(ol) > h)
    lo = np.where(par_miss, np.inf, lo)
    tmin = lo.max(axis=1)
    tmax = hi.min(axis=1)
    t = np.where((tmax >= tmin) & (tmin > 1e-3), tmin, np.inf)
    return t


def render(scene: SimScene, camera_pose: Pose, intrinsics: PinholeIntrinsics,
           params: OracleParams | None = None, time: float = 0.0) -> RenderedFrame:
    """Ray-cast the scene into a fused RGB-D + embeddings frame."""
    params = params or OracleParams()
    H, W = intrinsics.height, intrinsics.width
    npix = H * W
    dirs = intrinsics.ray_directions().reshape(npix, 3)
    Rcam = camera_pose.rotation_matrix()
    d = dirs @ Rcam.T
    o = np.broadcast_to(camera_pose.t, (npix, 3))

    best_t = np.full(npix, np.inf)
    best_obj = np.full(npix, -1, dtype=np.int32)
    obj_poses = []
    for oi, obj in enumerate(scene.objects):
        pose = scene.effective_pose(obj.id)
        obj_poses.append(pose)
        Rm, pm = pose.rotation_matrix(), pose.t
        for s in obj.shapes:
            if isinstance(s, Sphere):
                t = _ray_sphere(o, d, pose.apply(np.asarray(s.center)), s.radius)
            elif isinstance(s, Capsule):
                t = _ray_capsule(o, d, pose.apply(np.asarray(s.a)),
                                 pose.apply(np.asarray(s.b)), s.radius)
            else:
                t = _ray_box(o, d, Rm, pm, s.center, s.half_extents)
            closer = t < best_t
            best_t = np.where(closer, t, best_t)
            best_obj = np.where(closer, oi, best_obj)

    valid = np.isfinite(best_t)
    depth = np.where(valid, best_t, 0.0)
    hits = o + d * np.where(valid, best_t, 0.0)[:, None]

    embedding = np.zeros((npix, EMBED_DIM), dtype=np.float64)
    semantic = np.zeros((npix, SEMANTIC_DIM), dtype=np.float64)
    rgb = np.zeros((npix, 3), dtype=np.float64)
    instance = np.zeros((npix, 2), dtype=np.float64)
    class_image = np.zeros(npix, dtype=np.int32)
    illum = float(np.clip(scene.lights, 0.0, 2.0))

    cam_inv = camera_pose.inverse()
    for oi, obj in enumerate(scene.objects):
        sel = np.nonzero(best_obj == oi)[0]
        if len(sel) == 0:
            continue
        pose = obj_poses[oi]
        local = pose.inverse().apply(hits[sel])
        embedding[sel] = surface_embedding(local, obj.id, obj.material,
                                           view_dirs=d[sel], params=params,
                                           illumination=illum)
        semantic[sel] = class_embedding(obj.semantic_class)
        class_image[sel] = obj.semantic_class

        base = 0.25 + 0.65 * (_hash_vectors(
            _mix64(np.array([obj.material], dtype=np.uint64)), 3, salt=4)[0] * 0.5 + 0.5)
        rgb[sel] = np.clip(base[None, :] * illum * 0.8, 0.0, 1.0)

        # instance vector: projected object centroid minus the pixel coordinate
        centroid_w = pose.apply(_object_centroid_local(obj))
        c_cam = cam_inv.apply(centroid_w)
        if c_cam[2] > 1e-6:
            cu = c_cam[0] / c_cam[2] * intrinsics.fx + intrinsics.cx
            cv = c_cam[1] / c_cam[2] * intrinsics.fy + intrinsics.cy
            uu = sel % W
            vv = sel // W
            instance[sel, 0] = cu - uu
            instance[sel, 1] = cv - vv

    if params.dropout > 0:
        pose_key = np.asarray(camera_pose.to_list())
        pk = _mix64(np.frombuffer(
            hashlib.blake2b(pose_key.tobytes(), digest_size=8).digest(), np.uint64))
        with np.errstate(over="ignore"):
            pix_keys = _mix64(np.arange(npix, dtype=np.uint64)
                              ^ pk[0] ^ np.uint64(params.seed * 2654435761 + 17))
        drop = (_uniform_pm1(pix_keys) * 0.5 + 0.5) < params.dropout
        drop &= valid
        if drop.any():
            repl = _hash_vectors(_mix64(pix_keys[drop]), EMBED_DIM, salt=6)
            embedding[drop] = repl

    return RenderedFrame(
        width=W,
        height=H,
        rgb=rgb.reshape(H, W, 3).astype(np.float32),
        depth=depth.reshape(H, W),
        embedding=embedding.reshape(H, W, EMBED_DIM).astype(np.float32),
        semantic=semantic.reshape(H, W, SEMANTIC_DIM).astype(np.float32),
        instance=instance.reshape(H, W, 2).astype(np.float32),
        camera_pose=camera_pose,
        intrinsics=intrinsics,
        time=time,
        object_index=best_obj.reshape(H, W),
        class_image=class_image.reshape(H, W),
    )


def _object_centroid_local(obj) -> np.ndarray:
    cs = []
    for s in obj.shapes:
        if isinstance(s, Sphere):
            cs.append(np.asarray(s.center))
        elif isinstance(s, Capsule):
            cs.append((np.asarray(s.a) + np.asarray(s.b)) / 2)
        else:
            cs.append(np.asarray(s.center))
    return np.mean(cs, axis=0) if cs else np.zeros(3)
