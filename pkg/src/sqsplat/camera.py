"""Pinhole cameras with a world-to-camera rigid transform."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rotations import check_rotation


@dataclass(frozen=True)
class CameraView:
    """Pinhole intrinsics plus ``T_CW``: ``x_cam = R @ x_world + t``.

    Pixel ``(u, v)`` has its center at integer coordinates ``(u, v)``.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        object.__setattr__(self, "R", check_rotation(np.asarray(self.R, dtype=float)))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float).reshape(3))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.R.T @ self.t

    def world_to_camera(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.R.T + self.t

    def with_pose(self, R, t) -> "CameraView":
        return CameraView(self.fx, self.fy, self.cx, self.cy, self.width, self.height, R, t)

    def intrinsics_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def look_at(cls, eye, target, up, fx, fy, cx, cy, width, height) -> "CameraView":
        """Camera at ``eye`` with +z toward ``target`` and image -y roughly along ``up``."""
        eye = np.asarray(eye, dtype=float)
        fwd = np.asarray(target, dtype=float) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(up, dtype=float))
        if np.linalg.norm(right) < 1e-9:
            right = np.cross(fwd, np.array([1.0, 0.0, 0.0]))
            if np.linalg.norm(right) < 1e-9:
                right = np.cross(fwd, np.array([0.0, 1.0, 0.0]))
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        R = np.stack([right, down, fwd], axis=0)
        return cls(fx, fy, cx, cy, width, height, R, -R @ eye)
