"""Semantic Gaussian splatting: additive 3D Gaussian fields on voxel grids."""

from ._core import (
    IGNORE_LABEL,
    MINI_STREET_CLASSES,
    SH_Y00,
    default_anchor_count,
    evaluate,
    gen_features,
    mini_street,
    pool_planes,
    read_scene,
    run_pipeline,
    sh_basis,
    splat,
    write_scene,
)

__all__ = [
    "IGNORE_LABEL",
    "MINI_STREET_CLASSES",
    "SH_Y00",
    "default_anchor_count",
    "evaluate",
    "gen_features",
    "mini_street",
    "pool_planes",
    "read_scene",
    "run_pipeline",
    "sh_basis",
    "splat",
    "write_scene",
]
