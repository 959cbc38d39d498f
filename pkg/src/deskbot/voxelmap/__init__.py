"""Temporal voxel fusion, segmentation, and 2.5D projection."""

from .core import (
    COUNT_CAP,
    DEFAULT_RESOLUTION,
    EXPIRE_DECAY,
    EXPIRE_MARGIN,
    HeightMap2p5D,
    SegmentedObject,
    VoxelMap,
)
from .serial import export_2p5d_pgm, read_voxelmap, write_voxelmap

__all__ = [
    "COUNT_CAP",
    "DEFAULT_RESOLUTION",
    "EXPIRE_DECAY",
    "EXPIRE_MARGIN",
    "HeightMap2p5D",
    "SegmentedObject",
    "VoxelMap",
    "export_2p5d_pgm",
    "read_voxelmap",
    "write_voxelmap",
]
