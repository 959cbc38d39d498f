"""Voxel map snapshot serialization and 2.5D graymap export."""

from __future__ import annotations

import struct

import numpy as np

from .core import HeightMap2p5D, VoxelMap

MAGIC = b"DVM"
VERSION = 1

_ARRAYS = ("keys", "count", "mean_pos", "m2_pos", "mean_color", "m2_color",
           "mean_emb", "m2_emb", "mean_sem", "m2_sem",
           "last_observed", "last_expired_check")


def write_voxelmap(m: VoxelMap) -> bytes:
    parts = [MAGIC, struct.pack("<B", VERSION),
             struct.pack("<dII", m.resolution, m.embed_dim, len(m))]
    for name in _ARRAYS:
        a = getattr(m, name)
        parts.append(np.ascontiguousarray(a).tobytes())
    return b"".join(parts)


def read_voxelmap(data: bytes) -> VoxelMap:
    if data[:3] != MAGIC:
        raise ValueError("not a voxel map snapshot")
    if data[3] != VERSION:
        raise ValueError(f"unsupported voxel map version {data[3]}")
    res, embed_dim, n = struct.unpack_from("<dII", data, 4)
    off = 4 + 16
    m = VoxelMap(res, embed_dim)
    shapes = {
        "keys": ((n,), np.int64),
        "count": ((n,), np.float64),
        "mean_pos": ((n, 3), np.float64),
        "m2_pos": ((n, 3), np.float64),
        "mean_color": ((n, 3), np.float64),
        "m2_color": ((n, 3), np.float64),
        "mean_emb": ((n, embed_dim), np.float64),
        "m2_emb": ((n, embed_dim), np.float64),
        "mean_sem": ((n, 8), np.float64),
        "m2_sem": ((n, 8), np.float64),
        "last_observed": ((n,), np.float64),
        "last_expired_check": ((n,), np.float64),
    }
    for name in _ARRAYS:
        shape, dtype = shapes[name]
        size = int(np.prod(shape))
        a = np.frombuffer(data, dtype, size, off).reshape(shape).copy()
        off += a.nbytes
        setattr(m, name, a)
    m._index = {int(k): i for i, k in enumerate(m.keys)}
    return m


def export_2p5d_pgm(hm: HeightMap2p5D):
    """(elevation_pgm_bytes, traversability_pgm_bytes) for inspection."""
    def pgm(img: np.ndarray) -> bytes:
        h, w = img.shape
        header = f"P5\n{w} {h}\n255\n".encode()
        return header + img.astype(np.uint8).tobytes()

    if hm.elevation.size == 0:
        empty = np.zeros((1, 1))
        return pgm(empty), pgm(empty)
    e = hm.elevation - hm.elevation.min()
    scale = e.max() if e.max() > 0 else 1.0
    elev_img = np.round(255 * e / scale).T
    trav_img = np.where(hm.traversable.T, 255, 0)
    return pgm(elev_img), pgm(trav_img)
