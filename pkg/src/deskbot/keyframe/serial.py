"""Versioned binary container for keyframes; round-trips bit-exactly."""

from __future__ import annotations

import struct

import numpy as np

from ..geomkin import Pose
from ..percept import PinholeIntrinsics
from .core import Keyframe

MAGIC = b"DKF"
VERSION = 1


def write_keyframe(kf: Keyframe) -> bytes:
    mask_bits = np.packbits(kf.mask)
    kf_id = kf.id.encode()
    parts = [
        MAGIC,
        struct.pack("<B", VERSION),
        struct.pack("<H", len(kf_id)),
        kf_id,
        struct.pack(
            "<IIII",
            kf.intrinsics.width,
            kf.intrinsics.height,
            kf.descriptors.shape[1],
            kf.size,
        ),
        struct.pack(
            "<dddd", kf.intrinsics.fx, kf.intrinsics.fy, kf.intrinsics.cx, kf.intrinsics.cy
        ),
        np.asarray(kf.camera_pose.to_list(), dtype=np.float64).tobytes(),
        np.ascontiguousarray(kf.pixels, dtype=np.int32).tobytes(),
        np.ascontiguousarray(kf.depths, dtype=np.float64).tobytes(),
        np.ascontiguousarray(kf.points, dtype=np.float64).tobytes(),
        np.ascontiguousarray(kf.descriptors, dtype=np.float32).tobytes(),
        struct.pack("<I", len(mask_bits)),
        mask_bits.tobytes(),
    ]
    return b"".join(parts)


def read_keyframe(data: bytes) -> Keyframe:
    if data[:3] != MAGIC:
        raise ValueError("not a keyframe container")
    version = data[3]
    if version != VERSION:
        raise ValueError(f"unsupported keyframe container version {version}")
    off = 4
    (idlen,) = struct.unpack_from("<H", data, off)
    off += 2
    kf_id = data[off : off + idlen].decode()
    off += idlen
    w, h, d, n = struct.unpack_from("<IIII", data, off)
    off += 16
    fx, fy, cx, cy = struct.unpack_from("<dddd", data, off)
    off += 32
    pose_vals = np.frombuffer(data, np.float64, 7, off)
    off += 7 * 8
    pixels = np.frombuffer(data, np.int32, n * 2, off).reshape(n, 2).copy()
    off += n * 2 * 4
    depths = np.frombuffer(data, np.float64, n, off).copy()
    off += n * 8
    points = np.frombuffer(data, np.float64, n * 3, off).reshape(n, 3).copy()
    off += n * 3 * 8
    desc = np.frombuffer(data, np.float32, n * d, off).reshape(n, d).copy()
    off += n * d * 4
    (mask_len,) = struct.unpack_from("<I", data, off)
    off += 4
    mask_bits = np.frombuffer(data, np.uint8, mask_len, off)
    mask = np.unpackbits(mask_bits, count=w * h).astype(bool).reshape(h, w)
    return Keyframe(
        id=kf_id,
        descriptors=desc,
        points=points,
        pixels=pixels,
        depths=depths,
        mask=mask,
        camera_pose=Pose.from_list(pose_vals),
        intrinsics=PinholeIntrinsics(w, h, fx, fy, cx, cy),
    )
