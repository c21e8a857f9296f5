"""Point clouds and their ASCII PLY serialization."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class PointCloud:
    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if len(self.normals) != len(self.points):
                raise ValueError("normals and points differ in length")

    def __len__(self) -> int:
        return len(self.points)

    def subsample(self, max_points: int) -> "PointCloud":
        """Deterministic stride subsample down to at most ``max_points``."""
        n = len(self)
        if n <= max_points:
            return self
        idx = (np.arange(max_points) * n) // max_points
        normals = None if self.normals is None else self.normals[idx]
        return PointCloud(self.points[idx], normals)

    @staticmethod
    def concatenate(clouds) -> "PointCloud":
        clouds = list(clouds)
        pts = np.concatenate([c.points for c in clouds], axis=0)
        if all(c.normals is not None for c in clouds):
            return PointCloud(pts, np.concatenate([c.normals for c in clouds], axis=0))
        return PointCloud(pts)


def save_ply(cloud: PointCloud, path) -> None:
    """Write an ASCII PLY with float x, y, z (and nx, ny, nz when present)."""
    has_n = cloud.normals is not None
    lines = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}"]
    lines += [f"property float {c}" for c in ("x", "y", "z")]
    if has_n:
        lines += [f"property float {c}" for c in ("nx", "ny", "nz")]
    lines.append("end_header")
    data = np.hstack([cloud.points, cloud.normals]) if has_n else cloud.points
    body = "\n".join(" ".join(repr(float(v)) for v in row) for row in data)
    Path(path).write_text("\n".join(lines) + "\n" + body + ("\n" if len(data) else ""))


def load_ply(path) -> PointCloud:
    """Read an ASCII PLY vertex element; extra properties are ignored."""
    text = Path(path).read_text()
    header, sep, body = text.partition("end_header")
    if not sep:
        raise ValueError(f"{path}: missing end_header")
    hlines = [ln.strip() for ln in header.splitlines() if ln.strip()]
    if not hlines or hlines[0] != "ply":
        raise ValueError(f"{path}: not a PLY file")
    if not any(ln.startswith("format ascii") for ln in hlines):
        raise ValueError(f"{path}: only ASCII point-cloud PLY is supported")
    n_vertex = None
    props: list[str] = []
    in_vertex = False
    for ln in hlines:
        parts = ln.split()
        if parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                n_vertex = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            props.append(parts[-1])
    if n_vertex is None or not {"x", "y", "z"} <= set(props):
        raise ValueError(f"{path}: vertex element with x, y, z required")
    rows = [ln.split() for ln in body.splitlines() if ln.strip()][:n_vertex]
    if len(rows) != n_vertex:
        raise ValueError(f"{path}: expected {n_vertex} vertices, found {len(rows)}")
    data = np.array(rows, dtype=float).reshape(n_vertex, len(props))
    col = {p: i for i, p in enumerate(props)}
    pts = data[:, [col["x"], col["y"], col["z"]]]
    normals = None
    if {"nx", "ny", "nz"} <= set(props):
        normals = data[:, [col["nx"], col["ny"], col["nz"]]]
    return PointCloud(pts, normals)
