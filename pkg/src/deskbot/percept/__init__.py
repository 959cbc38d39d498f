"""Scene representation, rendering, and the procedural embedding oracle."""

from .render import (
    EMBED_DIM,
    LATTICE_PITCH,
    SEMANTIC_DIM,
    SURFACE_SNAP,
    OracleParams,
    PinholeIntrinsics,
    RenderedFrame,
    class_embedding,
    render,
    surface_embedding,
)
from .scene import (
    Articulation,
    Box,
    SceneObject,
    SceneShape,
    SimScene,
    load_scene,
    packaged_scene,
    rotation_about_line,
    scene_from_dict,
)
from .segment import match_semantic, segment_instances

__all__ = [
    "Articulation",
    "Box",
    "EMBED_DIM",
    "LATTICE_PITCH",
    "OracleParams",
    "PinholeIntrinsics",
    "RenderedFrame",
    "SEMANTIC_DIM",
    "SURFACE_SNAP",
    "SceneObject",
    "SceneShape",
    "SimScene",
    "class_embedding",
    "load_scene",
    "match_semantic",
    "packaged_scene",
    "render",
    "rotation_about_line",
    "scene_from_dict",
    "segment_instances",
    "surface_embedding",
]
