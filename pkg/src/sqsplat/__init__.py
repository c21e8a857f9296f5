"""Gaussian splatting initialized from superquadric primitive assemblies."""
from .camera import CameraView
from .errors import SqSplatError
from .gaussians import Gaussian3D, GaussianModel
from .pointcloud import PointCloud
from .render import render, render_with_cache
from .superquadric import PrimitiveAssembly, SuperquadricParams

__version__ = "0.1.0"

__all__ = [
    "CameraView",
    "Gaussian3D",
    "GaussianModel",
    "PointCloud",
    "PrimitiveAssembly",
    "SqSplatError",
    "SuperquadricParams",
    "render",
    "render_with_cache",
]
