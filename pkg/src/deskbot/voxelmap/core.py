"""Sparse statistical voxel map: streaming first/second moments of position,
color, and embeddings per cell, depth-based expiration of dynamic objects,
graph segmentation, and 2.5D traversability projection.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ..percept import EMBED_DIM, SEMANTIC_DIM, RenderedFrame

DEFAULT_RESOLUTION = 0.02
EXPIRE_MARGIN = 0.04  # m in front of the measured surface
EXPIRE_DECAY = 0.5  # count multiplier per contradiction
COUNT_CAP = 16.0  # bounds contradictions needed to expire any voxel
REMOVE_BELOW = 1.0
DEDUP_WINDOW = 1024

GRID_RES_2P5D = 0.05
TRAVERSABLE_BAND = 0.02  # m above the floor estimate


def _pack(cells: np.ndarray) -> np.ndarray:
    """(n, 3) int cells -> packed int64 keys (21 bits per axis, offset)."""
    c = cells.astype(np.int64) + (1 << 20)
    return (c[:, 0] << 42) | (c[:, 1] << 21) | c[:, 2]


def _unpack(keys: np.ndarray) -> np.ndarray:
    mask = (1 << 21) - 1
    x = (keys >> 42) & mask
    y = (keys >> 21) & mask
    z = keys & mask
    return np.stack([x, y, z], axis=1) - (1 << 20)


@dataclass
class SegmentedObject:
    id: int
    voxel_keys: np.ndarray
    centroid: np.ndarray
    principal_dimensions: np.ndarray  # sorted descending, meters
    mean_embedding: np.ndarray


class VoxelMap:
    """Owned by a single fusion thread; snapshot() hands immutable copies out."""

    def __init__(self, resolution: float = DEFAULT_RESOLUTION, embed_dim: int = EMBED_DIM):
        self.resolution = float(resolution)
        self.embed_dim = embed_dim
        self._index: dict[int, int] = {}
        n0 = 0
        self.keys = np.zeros(n0, dtype=np.int64)
        self.count = np.zeros(n0)
        self.mean_pos = np.zeros((n0, 3))
        self.m2_pos = np.zeros((n0, 3))  # running mean of squares
        self.mean_color = np.zeros((n0, 3))
        self.m2_color = np.zeros((n0, 3))
        self.mean_emb = np.zeros((n0, embed_dim))
        self.m2_emb = np.zeros((n0, embed_dim))
        self.mean_sem = np.zeros((n0, SEMANTIC_DIM))
        self.m2_sem = np.zeros((n0, SEMANTIC_DIM))
        self.last_observed = np.zeros(n0)
        self.last_expired_check = np.zeros(n0)
        self._integrated: OrderedDict[str, None] = OrderedDict()
        self._expired: OrderedDict[str, None] = OrderedDict()

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def size(self) -> int:
        return len(self.keys)

    def cell_of(self, points: np.ndarray) -> np.ndarray:
        return np.floor(np.atleast_2d(points) / self.resolution).astype(np.int64)

    def centers(self) -> np.ndarray:
        return (_unpack(self.keys) + 0.5) * self.resolution

    def occupied_cells(self) -> np.ndarray:
        return _unpack(self.keys)

    # -- fusion -------------------------------------------------------------

    def _rows_for(self, keys: np.ndarray) -> np.ndarray:
        rows = np.empty(len(keys), dtype=np.int64)
        new_keys = []
        for i, k in enumerate(keys):
            r = self._index.get(int(k), -1)
            if r < 0:
                r = len(self._index)
                self._index[int(k)] = r
                new_keys.append(k)
            rows[i] = r
        if new_keys:
            grow = len(new_keys)
            self.keys = np.concatenate([self.keys, np.asarray(new_keys, dtype=np.int64)])
            self.count = np.concatenate([self.count, np.zeros(grow)])
            for name in ("mean_pos", "m2_pos", "mean_color", "m2_color"):
                setattr(self, name, np.vstack([getattr(self, name), np.zeros((grow, 3))]))
            self.mean_emb = np.vstack([self.mean_emb, np.zeros((grow, self.embed_dim))])
            self.m2_emb = np.vstack([self.m2_emb, np.zeros((grow, self.embed_dim))])
            self.mean_sem = np.vstack([self.mean_sem, np.zeros((grow, SEMANTIC_DIM))])
            self.m2_sem = np.vstack([self.m2_sem, np.zeros((grow, SEMANTIC_DIM))])
            self.last_observed = np.concatenate([self.last_observed, np.zeros(grow)])
            self.last_expired_check = np.concatenate([self.last_expired_check, np.zeros(grow)])
        return rows

    def _dedup(self, table: OrderedDict, frame_id: str) -> bool:
        if frame_id in table:
            return True
        table[frame_id] = None
        while len(table) > DEDUP_WINDOW:
            table.popitem(last=False)
        return False

    def integrate(self, frame: RenderedFrame, exclude_aabbs=(), frame_id: str | None = None):
        """Fuse one frame's valid pixels into the running voxel statistics."""
        fid = frame_id or frame.content_hash()
        if self._dedup(self._integrated, fid):
            return
        valid = frame.valid
        if not valid.any():
            return
        pts = frame.backproject()[valid]
        colors = frame.rgb[valid].astype(np.float64)
        embs = frame.embedding[valid].astype(np.float64)
        sems = frame.semantic[valid].astype(np.float64)
        keep = np.ones(len(pts), dtype=bool)
        for lo, hi in exclude_aabbs:
            inside = np.all((pts >= np.asarray(lo)) & (pts <= np.asarray(hi)), axis=1)
            keep &= ~inside
        pts, colors, embs, sems = pts[keep], colors[keep], embs[keep], sems[keep]
        if len(pts) == 0:
            return
        keys = _pack(self.cell_of(pts))
        order = np.argsort(keys, kind="stable")
        keys, pts, colors, embs, sems = (keys[order], pts[order], colors[order],
                                         embs[order], sems[order])
        uniq, start = np.unique(keys, return_index=True)
        rows = self._rows_for(uniq)
        nb = np.diff(np.append(start, len(keys))).astype(float)

        def batch_merge(mean, m2, values):
            sums = np.add.reduceat(values, start, axis=0)
            sumsq = np.add.reduceat(values * values, start, axis=0)
            total = self.count[rows, None] + nb[:, None]
            mean[rows] += (sums - nb[:, None] * mean[rows]) / total
            m2[rows] += (sumsq - nb[:, None] * m2[rows]) / total

        batch_merge(self.mean_pos, self.m2_pos, pts)
        batch_merge(self.mean_color, self.m2_color, colors)
        batch_merge(self.mean_emb, self.m2_emb, embs)
        batch_merge(self.mean_sem, self.m2_sem, sems)
        self.count[rows] = np.minimum(self.count[rows] + nb, COUNT_CAP)
        self.last_observed[rows] = frame.time

    def expire(self, frame: RenderedFrame, frame_id: str | None = None):
        """Decay voxels observed in front of the measured surface; drop the
        fully contradicted ones."""
        fid = frame_id or frame.content_hash()
        if self._dedup(self._expired, fid):
            return
        if len(self) == 0:
            return
        cam_inv = frame.camera_pose.inverse()
        pc = cam_inv.apply(self.mean_pos)
        in_front = pc[:, 2] > 1e-6
        u, v, rng = frame.intrinsics.project(pc)
        ui = np.round(u).astype(np.int64)
        vi = np.round(v).astype(np.int64)
        inside = (
            in_front
            & (ui >= 0) & (ui < frame.width)
            & (vi >= 0) & (vi < frame.height)
        )
        idx = np.nonzero(inside)[0]
        if len(idx) == 0:
            return
        measured = frame.depth[vi[idx], ui[idx]]
        contradicted = (measured > 0) & (rng[idx] < measured - EXPIRE_MARGIN)
        rows = idx[contradicted]
        self.count[rows] *= EXPIRE_DECAY
        self.last_expired_check[idx] = frame.time
        if (self.count[rows] < REMOVE_BELOW).any():
            self._remove(np.nonzero(self.count < REMOVE_BELOW)[0])

    def _remove(self, rows: np.ndarray):
        keep = np.ones(len(self), dtype=bool)
        keep[rows] = False
        for name in ("keys", "count", "mean_pos", "m2_pos", "mean_color", "m2_color",
                     "mean_emb", "m2_emb", "mean_sem", "m2_sem",
                     "last_observed", "last_expired_check"):
            setattr(self, name, getattr(self, name)[keep])
        self._index = {int(k): i for i, k in enumerate(self.keys)}

    def snapshot(self) -> "VoxelMap":
        """Deep copy for readers (copy-on-read)."""
        m = VoxelMap(self.resolution, self.embed_dim)
        for name in ("keys", "count", "mean_pos", "m2_pos", "mean_color", "m2_color",
                     "mean_emb", "m2_emb", "mean_sem", "m2_sem",
                     "last_observed", "last_expired_check"):
            setattr(m, name, getattr(self, name).copy())
        m._index = dict(self._index)
        return m

    # -- queries ------------------------------------------------------------

    def moment_consistency_violation(self) -> float:
        """max(mean^2 - second_moment) across all stats; <= ~0 when healthy."""
        worst = 0.0
        for mean, m2 in ((self.mean_pos, self.m2_pos), (self.mean_color, self.m2_color),
                         (self.mean_emb, self.m2_emb), (self.mean_sem, self.m2_sem)):
            if len(mean):
                worst = max(worst, float((mean * mean - m2).max()))
        return worst

    def segment(self, cosine_threshold: float = 0.25, min_voxels: int = 10
                ) -> list[SegmentedObject]:
        """Union-find over 26-neighbourhoods joining embedding-compatible cells."""
        n = len(self)
        if n == 0:
            return []
        order = np.argsort(self.keys, kind="stable")
        key_to_pos = {int(self.keys[r]): r for r in order}
        parent = np.arange(n)

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        norms = np.linalg.norm(self.mean_sem, axis=1)
        cells = _unpack(self.keys)
        offsets = [
            (dx, dy, dz)
            for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
            if (dx, dy, dz) > (0, 0, 0)
        ]
        for r in order:
            c = cells[r]
            for off in offsets:
                k2 = int(_pack((c + off)[None])[0])
                r2 = key_to_pos.get(k2)
                if r2 is None:
                    continue
                na, nb_ = norms[r], norms[r2]
                if na == 0 or nb_ == 0:
                    continue
                cos = float(self.mean_sem[r] @ self.mean_sem[r2]) / (na * nb_)
                if 1.0 - cos <= cosine_threshold:
                    ra, rb = find(r), find(r2)
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)

        groups: dict[int, list[int]] = {}
        for r in order:
            groups.setdefault(int(find(r)), []).append(r)
        out = []
        for gi, root in enumerate(sorted(groups)):
            rows = np.asarray(groups[root])
            if len(rows) < min_voxels:
                continue
            w = self.count[rows]
            centroid = (self.mean_pos[rows] * w[:, None]).sum(axis=0) / w.sum()
            d = self.mean_pos[rows] - centroid
            if len(rows) >= 3:
                s = np.linalg.svd(d * np.sqrt(w[:, None] / w.sum()), compute_uv=False)
                dims = 2.0 * s[:3]
            else:
                dims = np.zeros(3)
            emb = (self.mean_sem[rows] * w[:, None]).sum(axis=0)
            en = np.linalg.norm(emb)
            out.append(SegmentedObject(
                id=len(out),
                voxel_keys=self.keys[rows].copy(),
                centroid=centroid,
                principal_dimensions=dims,
                mean_embedding=emb / en if en > 0 else emb,
            ))
        return out

    def project_2p5d(self, grid_res: float = GRID_RES_2P5D,
                     band: float = TRAVERSABLE_BAND) -> "HeightMap2p5D":
        """Top-down elevation + traversability; unobserved = untraversable."""
        if len(self) == 0:
            return HeightMap2p5D(np.zeros(2, dtype=np.int64), grid_res,
                                 np.zeros((0, 0)), np.zeros((0, 0), bool),
                                 np.zeros((0, 0), int))
        xy = self.mean_pos[:, :2]
        z = self.mean_pos[:, 2]
        cells = np.floor(xy / grid_res).astype(np.int64)
        lo = cells.min(axis=0)
        hi = cells.max(axis=0)
        shape = (hi - lo) + 1
        elev = np.full(shape, -np.inf)
        cnt = np.zeros(shape, dtype=int)
        ij = cells - lo
        for (i, j), zz, cc in zip(ij, z, self.count):
            if zz > elev[i, j]:
                elev[i, j] = zz
            cnt[i, j] += int(cc)
        observed = cnt > 0
        floor_z = float(np.percentile(elev[observed], 5)) if observed.any() else 0.0
        trav = observed & (elev <= floor_z + band)
        elev = np.where(observed, elev, 0.0)
        return HeightMap2p5D(lo, grid_res, elev, trav, cnt, floor_z)


@dataclass(frozen=True)
class HeightMap2p5D:
    origin_cell: np.ndarray  # integer cell coordinates of grid index (0, 0)
    resolution: float
    elevation: np.ndarray  # (nx, ny) meters
    traversable: np.ndarray  # (nx, ny) bool
    observations: np.ndarray  # (nx, ny) int
    floor_z: float = 0.0

    @property
    def shape(self):
        return self.elevation.shape

    @property
    def origin(self) -> np.ndarray:
        """World (x, y) of the grid's (0, 0) cell corner."""
        return self.origin_cell * self.resolution

    def cell_of(self, xy) -> tuple[int, int]:
        # same floor arithmetic as map construction, so lookups agree bitwise
        c = np.floor(np.asarray(xy, float) / self.resolution).astype(np.int64)
        return int(c[0] - self.origin_cell[0]), int(c[1] - self.origin_cell[1])

    def in_bounds(self, cell) -> bool:
        i, j = cell
        return 0 <= i < self.shape[0] and 0 <= j < self.shape[1]

    def traversable_at(self, xy) -> bool:
        c = self.cell_of(xy)
        if not self.in_bounds(c):
            return False  # unobserved: conservative
        return bool(self.traversable[c])
