"""Starting models: a random cloud or samples from a primitive assembly."""
from __future__ import annotations

import numpy as np

from ..errors import MissingAssembly
from ..gaussians import GaussianModel, from_pointcloud
from ..pointcloud import PointCloud
from ..superquadric import PrimitiveAssembly, assembly_to_pointcloud

RANDOM_POINTS = 5000
INIT_STYLES = ("random", "primitives")


def initialize(
    style: str,
    seed: int,
    extent: float = 1.0,
    assembly: PrimitiveAssembly | None = None,
    points_per_primitive: int = 1000,
    n_random: int = RANDOM_POINTS,
    init_opacity: float = 0.1,
) -> GaussianModel:
    """Build the initial model.

    ``random`` draws ``n_random`` means uniformly in the cube ``[-extent, extent]^3``;
    ``primitives`` places one Gaussian on every surface sample of ``assembly``.
    """
    if style == "random":
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-extent, extent, size=(n_random, 3))
        return from_pointcloud(PointCloud(pts), init_opacity=init_opacity)
    if style == "primitives":
        if assembly is None:
            raise MissingAssembly("primitive initialization needs an assembly")
        cloud = assembly_to_pointcloud(assembly, points_per_primitive)
        return from_pointcloud(cloud, init_opacity=init_opacity)
    raise ValueError(f"unknown init style {style!r}; choose from {INIT_STYLES}")
