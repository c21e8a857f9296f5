"""Tapered superquadric primitives and primitive assemblies.

A primitive is 16 numbers: per-axis scale ``alpha`` (3), shape exponents
``epsilon`` (2), translation (3), 6D rotation (6) and x/y tapering (2).
The surface uses the usual signed-power parameterization

    x = a1 * f(cos eta, e1) * f(cos w, e2)
    y = a2 * f(cos eta, e1) * f(sin w, e2)
    z = a3 * f(sin eta, e1)

with ``f(v, e) = sign(v) |v|**e``, ``eta in [-pi/2, pi/2]``, ``w in [-pi, pi)``.
Tapering ``x' = (kx z / a3 + 1) x`` (same for y) is applied in the primitive
frame, before rotation and translation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pointcloud import PointCloud
from .rotations import dcm_to_rot6d, rot6d_to_dcm

EPSILON_RANGE = (0.05, 2.0)
PARAMS_PER_PRIMITIVE = 16

# Trig values this close to zero are snapped so pole and seam samples coincide exactly.
_SNAP = 1e-12


@dataclass(frozen=True)
class SuperquadricParams:
    alpha: np.ndarray
    epsilon: np.ndarray
    trans: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rot6d: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0, 1.0, 0]))
    taper: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float).reshape(3)
        if not np.all(alpha > 0):
            raise ValueError(f"alpha must be strictly positive, got {alpha}")
        eps = np.clip(np.asarray(self.epsilon, dtype=float).reshape(2), *EPSILON_RANGE)
        taper = np.asarray(self.taper, dtype=float).reshape(2)
        if np.any(np.abs(taper) > 1.0):
            raise ValueError(f"taper coefficients must lie in [-1, 1], got {taper}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "trans", np.asarray(self.trans, dtype=float).reshape(3))
        object.__setattr__(self, "rot6d", np.asarray(self.rot6d, dtype=float).reshape(6))
        object.__setattr__(self, "taper", taper)

    @property
    def rotation(self) -> np.ndarray:
        return rot6d_to_dcm(self.rot6d)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.epsilon, self.trans, self.rot6d, self.taper])

    @classmethod
    def from_vector(cls, v) -> "SuperquadricParams":
        v = np.asarray(v, dtype=float).reshape(PARAMS_PER_PRIMITIVE)
        return cls(v[0:3], v[3:5], v[5:8], v[8:14], v[14:16])

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha.tolist(),
            "epsilon": self.epsilon.tolist(),
            "trans": self.trans.tolist(),
            "rot6d": self.rot6d.tolist(),
            "taper": self.taper.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SuperquadricParams":
        return cls(d["alpha"], d["epsilon"], d["trans"], d["rot6d"], d["taper"])

    def transformed(self, R, t=(0.0, 0.0, 0.0)) -> "SuperquadricParams":
        """The same primitive after mapping its parent frame by ``p -> R p + t``."""
        R = np.asarray(R, dtype=float)
        return SuperquadricParams(
            self.alpha,
            self.epsilon,
            R @ self.trans + np.asarray(t, dtype=float),
            dcm_to_rot6d(R @ self.rotation),
            self.taper,
        )


@dataclass(frozen=True)
class PrimitiveAssembly:
    primitives: tuple

    def __post_init__(self):
        prims = tuple(self.primitives)
        if len(prims) < 1:
            raise ValueError("an assembly needs at least one primitive")
        object.__setattr__(self, "primitives", prims)

    def __len__(self) -> int:
        return len(self.primitives)

    def __iter__(self):
        return iter(self.primitives)

    @property
    def n_params(self) -> int:
        return PARAMS_PER_PRIMITIVE * len(self)

    def transformed(self, R, t=(0.0, 0.0, 0.0)) -> "PrimitiveAssembly":
        return PrimitiveAssembly(tuple(p.transformed(R, t) for p in self.primitives))

    def to_json(self) -> str:
        return json.dumps({"primitives": [p.to_dict() for p in self.primitives]}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PrimitiveAssembly":
        doc = json.loads(text)
        return cls(tuple(SuperquadricParams.from_dict(d) for d in doc["primitives"]))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "PrimitiveAssembly":
        return cls.from_json(Path(path).read_text())


def _signed_pow(v, e):
    return np.sign(v) * np.abs(v) ** e


def _snap(v):
    return np.where(np.abs(v) < _SNAP, 0.0, v)


def parameter_grid(n_eta: int, n_omega: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform (eta, omega) grid, flattened; eta includes both poles."""
    if n_eta < 2 or n_omega < 3:
        raise ValueError("need n_eta >= 2 and n_omega >= 3")
    eta = np.linspace(-np.pi / 2, np.pi / 2, n_eta)
    omega = -np.pi + 2 * np.pi * np.arange(n_omega) / n_omega
    E, W = np.meshgrid(eta, omega, indexing="ij")
    return E.ravel(), W.ravel()


def canonical_points(alpha, epsilon, eta, omega) -> np.ndarray:
    """Untapered surface points in the primitive frame."""
    a1, a2, a3 = alpha
    e1, e2 = epsilon
    ce, se = _snap(np.cos(eta)), _snap(np.sin(eta))
    cw, sw = _snap(np.cos(omega)), _snap(np.sin(omega))
    fe = _signed_pow(ce, e1)
    x = a1 * fe * _signed_pow(cw, e2)
    y = a2 * fe * _signed_pow(sw, e2)
    z = a3 * _signed_pow(se, e1)
    return np.stack([x, y, z], axis=-1)


def implicit_value(points, alpha, epsilon) -> np.ndarray:
    """Inside-outside function; equals 1 on the untapered surface."""
    p = np.asarray(points, dtype=float)
    a1, a2, a3 = alpha
    e1, e2 = epsilon
    xy = np.abs(p[:, 0] / a1) ** (2 / e2) + np.abs(p[:, 1] / a2) ** (2 / e2)
    return xy ** (e2 / e1) + np.abs(p[:, 2] / a3) ** (2 / e1)


def implicit_gradient(points, alpha, epsilon) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    a1, a2, a3 = alpha
    e1, e2 = epsilon
    ax, ay, az = np.abs(p[:, 0] / a1), np.abs(p[:, 1] / a2), np.abs(p[:, 2] / a3)
    with np.errstate(divide="ignore", invalid="ignore"):
        A = ax ** (2 / e2) + ay ** (2 / e2)
        outer = (2 / e1) * A ** (e2 / e1 - 1)
        gx = outer * ax ** (2 / e2 - 1) * np.sign(p[:, 0]) / a1
        gy = outer * ay ** (2 / e2 - 1) * np.sign(p[:, 1]) / a2
        gz = (2 / e1) * az ** (2 / e1 - 1) * np.sign(p[:, 2]) / a3
    return np.stack([gx, gy, gz], axis=-1)


def taper_points(points, alpha, taper) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    zr = p[:, 2] / alpha[2]
    out = p.copy()
    out[:, 0] *= taper[0] * zr + 1.0
    out[:, 1] *= taper[1] * zr + 1.0
    return out


def _surface_normals(pts, alpha, epsilon, taper) -> np.ndarray:
    n = implicit_gradient(pts, alpha, epsilon)
    # Taper Jacobian J = [[fx, 0, kx x/a3], [0, fy, ky y/a3], [0, 0, 1]]; normals map by J^-T.
    zr = pts[:, 2] / alpha[2]
    fx = taper[0] * zr + 1.0
    fy = taper[1] * zr + 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        nx = n[:, 0] / fx
        ny = n[:, 1] / fy
        nz = n[:, 2] - nx * taper[0] * pts[:, 0] / alpha[2] - ny * taper[1] * pts[:, 1] / alpha[2]
    out = np.stack([nx, ny, nz], axis=-1)
    norm = np.linalg.norm(out, axis=-1, keepdims=True)
    bad = ~np.isfinite(norm[:, 0]) | (norm[:, 0] < 1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = out / norm
    if np.any(bad):
        fallback = pts[bad] / alpha
        fn = np.linalg.norm(fallback, axis=-1, keepdims=True)
        fn[fn == 0] = 1.0
        out[bad] = fallback / fn
    return out


def _dedupe(points: np.ndarray) -> np.ndarray:
    """Indices of first occurrences of exactly repeated points, in input order."""
    _, first = np.unique(points, axis=0, return_index=True)
    return np.sort(first)


def sample_surface(
    sq: SuperquadricParams, n_eta: int, n_omega: int, with_normals: bool = False
) -> PointCloud:
    """Posed surface samples on a uniform (eta, omega) grid, pole duplicates removed."""
    eta, omega = parameter_grid(n_eta, n_omega)
    local = canonical_points(sq.alpha, sq.epsilon, eta, omega)
    keep = _dedupe(local)
    local = local[keep]
    tapered = taper_points(local, sq.alpha, sq.taper)
    R = sq.rotation
    pts = tapered @ R.T + sq.trans
    normals = None
    if with_normals:
        normals = _surface_normals(local, sq.alpha, sq.epsilon, sq.taper) @ R.T
    return PointCloud(pts, normals)


def _grid_for_count(n: int) -> tuple[int, int]:
    n_omega = max(3, int(np.ceil(np.sqrt(2.0 * n))))
    n_eta = max(2, int(np.ceil(n / n_omega)) + 2)
    return n_eta, n_omega


def sample_primitive(sq: SuperquadricParams, n_points: int, with_normals: bool = False) -> PointCloud:
    """Exactly ``n_points`` surface samples, strided out of a dense enough grid."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    n_eta, n_omega = _grid_for_count(n_points)
    while True:
        cloud = sample_surface(sq, n_eta, n_omega, with_normals)
        if len(cloud) >= n_points:
            break
        n_eta += 2
        n_omega += 2
    idx = (np.arange(n_points) * len(cloud)) // n_points
    normals = None if cloud.normals is None else cloud.normals[idx]
    return PointCloud(cloud.points[idx], normals)


def assembly_to_pointcloud(
    asm: PrimitiveAssembly, points_per_primitive: int, with_normals: bool = False
) -> PointCloud:
    return PointCloud.concatenate(
        sample_primitive(p, points_per_primitive, with_normals) for p in asm.primitives
    )


def primitive_labels(asm: PrimitiveAssembly, points_per_primitive: int) -> np.ndarray:
    """Primitive index of every point produced by :func:`assembly_to_pointcloud`."""
    return np.repeat(np.arange(len(asm)), points_per_primitive)
