"""Trainable 3D Gaussian sets.

A :class:`GaussianModel` stores parameters as stacked arrays:

* ``means``          ``(N, 3)``
* ``log_scales``     ``(N, 3)``  log of per-axis standard deviation
* ``quats``          ``(N, 4)``  orientation, scalar first
* ``opacity_logits`` ``(N,)``    opacity is ``sigmoid(logit)``
* ``sh``             ``(N, 16, 3)`` real SH coefficients, basis index by RGB

:class:`Gaussian3D` is a single-Gaussian view used by the per-Gaussian helpers.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import sh as shmod
from .errors import SingularCovariance
from .pointcloud import PointCloud
from .rotations import quat_to_dcm

LOG_SCALE_MIN = float(np.log(1e-6))
LOG_SCALE_MAX = float(np.log(1e3))
INIT_SCALE_RANGE = (1e-4, 0.5)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


@dataclass
class Gaussian3D:
    mean: np.ndarray
    log_scale: np.ndarray
    rot_quat: np.ndarray
    opacity_logit: float
    sh_coeffs: np.ndarray  # (16, 3)

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))


@dataclass
class GaussianModel:
    means: np.ndarray
    log_scales: np.ndarray
    quats: np.ndarray
    opacity_logits: np.ndarray
    sh: np.ndarray
    active_sh_degree: int = 0

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float).reshape(-1, 3)
        n = len(self.means)
        self.log_scales = np.asarray(self.log_scales, dtype=float).reshape(n, 3)
        self.quats = np.asarray(self.quats, dtype=float).reshape(n, 4)
        self.opacity_logits = np.asarray(self.opacity_logits, dtype=float).reshape(n)
        self.sh = np.asarray(self.sh, dtype=float).reshape(n, shmod.N_COEFFS, 3)
        if not 0 <= self.active_sh_degree <= shmod.MAX_DEGREE:
            raise ValueError(f"active_sh_degree must be in [0, 3], got {self.active_sh_degree}")

    PARAM_NAMES = ("means", "log_scales", "quats", "opacity_logits", "sh")

    def __len__(self) -> int:
        return len(self.means)

    def __getitem__(self, i: int) -> Gaussian3D:
        return Gaussian3D(
            self.means[i].copy(),
            self.log_scales[i].copy(),
            self.quats[i].copy(),
            float(self.opacity_logits[i]),
            self.sh[i].copy(),
        )

    @classmethod
    def empty(cls) -> "GaussianModel":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), np.zeros((0, 16, 3)))

    @classmethod
    def from_gaussians(cls, gaussians, active_sh_degree: int = 0) -> "GaussianModel":
        gaussians = list(gaussians)
        if not gaussians:
            return cls.empty()
        return cls(
            np.stack([g.mean for g in gaussians]),
            np.stack([g.log_scale for g in gaussians]),
            np.stack([g.rot_quat for g in gaussians]),
            np.array([g.opacity_logit for g in gaussians]),
            np.stack([g.sh_coeffs for g in gaussians]),
            active_sh_degree,
        )

    def copy(self) -> "GaussianModel":
        return GaussianModel(
            self.means.copy(),
            self.log_scales.copy(),
            self.quats.copy(),
            self.opacity_logits.copy(),
            self.sh.copy(),
            self.active_sh_degree,
        )

    def take(self, idx) -> "GaussianModel":
        idx = np.asarray(idx)
        return GaussianModel(
            self.means[idx],
            self.log_scales[idx],
            self.quats[idx],
            self.opacity_logits[idx],
            self.sh[idx],
            self.active_sh_degree,
        )

    @staticmethod
    def concatenate(models) -> "GaussianModel":
        models = list(models)
        return GaussianModel(
            np.concatenate([m.means for m in models]),
            np.concatenate([m.log_scales for m in models]),
            np.concatenate([m.quats for m in models]),
            np.concatenate([m.opacity_logits for m in models]),
            np.concatenate([m.sh for m in models]),
            max(m.active_sh_degree for m in models),
        )

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    def covariances(self) -> np.ndarray:
        return covariance_matrices(self.quats, self.log_scales)

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.PARAM_NAMES}

    def normalize_quats(self) -> None:
        self.quats /= np.linalg.norm(self.quats, axis=1, keepdims=True)

    def clamp_scales(self) -> None:
        np.clip(self.log_scales, LOG_SCALE_MIN, LOG_SCALE_MAX, out=self.log_scales)


def covariance_matrices(quats, log_scales) -> np.ndarray:
    """``R diag(s)^2 R^T`` for stacked factors."""
    R = quat_to_dcm(quats)
    M = R * np.exp(np.asarray(log_scales, dtype=float))[..., None, :]
    return M @ np.swapaxes(M, -1, -2)


def covariance(g: Gaussian3D) -> np.ndarray:
    return covariance_matrices(g.rot_quat, g.log_scale)


def eval_density(g: Gaussian3D, x) -> float:
    """Gaussian density with the ``1 / (2 pi sqrt|Sigma|)`` prefactor used in the method description.

    Note the prefactor is the 2D normalization; in 3D the integral of this
    function is ``sqrt(2 pi)``, not 1.
    """
    cov = covariance(g)
    det = np.linalg.det(cov)
    if det < 1e-30:
        raise SingularCovariance(f"|Sigma| = {det:g}")
    d = np.asarray(x, dtype=float) - g.mean
    q = d @ np.linalg.solve(cov, d)
    return float(np.exp(-0.5 * q) / (2.0 * np.pi * np.sqrt(det)))


def eval_density_normalized(g: Gaussian3D, x) -> float:
    """Properly normalized trivariate normal density."""
    cov = covariance(g)
    det = np.linalg.det(cov)
    if det < 1e-30:
        raise SingularCovariance(f"|Sigma| = {det:g}")
    d = np.asarray(x, dtype=float) - g.mean
    q = d @ np.linalg.solve(cov, d)
    return float(np.exp(-0.5 * q) / np.sqrt((2.0 * np.pi) ** 3 * det))


def eval_sh_color(g: Gaussian3D, view_dir, degree: int) -> np.ndarray:
    view_dir = np.asarray(view_dir, dtype=float)
    if abs(np.linalg.norm(view_dir) - 1.0) > 1e-6:
        raise ValueError("view_dir must be a unit vector")
    if not 0 <= degree <= shmod.MAX_DEGREE:
        raise ValueError(f"degree must be in [0, 3], got {degree}")
    k = shmod.n_coeffs(degree)
    basis = shmod.sh_basis(view_dir)[:k]
    return np.clip(basis @ g.sh_coeffs[:k] + 0.5, 0.0, 1.0)


def nn_init_scales(points, scale_factor: float = 1.0, k: int = 3, single_point_scale: float = 0.01):
    """Per-point isotropic scale: mean distance to the (up to ``k``) nearest neighbours."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n == 1:
        return np.full(1, single_point_scale)
    kk = min(k, n - 1)
    dist, _ = cKDTree(pts).query(pts, k=kk + 1)
    mean_d = dist[:, 1:].mean(axis=1)
    return np.clip(scale_factor * mean_d, *INIT_SCALE_RANGE)


def from_pointcloud(
    pc: PointCloud,
    init_opacity: float = 0.1,
    base_color=(0.5, 0.5, 0.5),
    scale_factor: float = 1.0,
    colors=None,
) -> GaussianModel:
    """One isotropic Gaussian per point, DC color set to ``base_color`` (or per-point ``colors``)."""
    if len(pc) == 0:
        raise ValueError("point cloud is empty")
    if not 0.0 < init_opacity < 1.0:
        raise ValueError("init_opacity must lie in (0, 1)")
    n = len(pc)
    scales = nn_init_scales(pc.points, scale_factor)
    quats = np.zeros((n, 4))
    quats[:, 0] = 1.0
    sh = np.zeros((n, shmod.N_COEFFS, 3))
    rgb = np.broadcast_to(np.asarray(base_color if colors is None else colors, dtype=float), (n, 3))
    sh[:, 0, :] = shmod.rgb_to_dc(rgb)
    return GaussianModel(
        pc.points.copy(),
        np.repeat(np.log(scales)[:, None], 3, axis=1),
        quats,
        np.full(n, float(logit(init_opacity))),
        sh,
    )


# -- binary PLY ------------------------------------------------------------

def ply_property_names() -> list[str]:
    """Vertex property order of the Gaussian PLY layout.

    ``f_rest_*`` is channel-major: ``f_rest_{c * 15 + (k - 1)}`` holds
    coefficient ``k >= 1`` of channel ``c``. ``rot_*`` is ``(w, x, y, z)``.
    Opacity and scales are stored pre-activation (logit, log).
    """
    names = ["x", "y", "z"]
    names += [f"f_dc_{i}" for i in range(3)]
    names += [f"f_rest_{i}" for i in range(3 * (shmod.N_COEFFS - 1))]
    names += ["opacity"]
    names += [f"scale_{i}" for i in range(3)]
    names += [f"rot_{i}" for i in range(4)]
    return names


def _vertex_dtype():
    return np.dtype([(n, "<f8") for n in ply_property_names()])


def save_ply(model: GaussianModel, path) -> None:
    n = len(model)
    names = ply_property_names()
    header = ["ply", "format binary_little_endian 1.0", f"comment active_sh_degree {model.active_sh_degree}"]
    header.append(f"element vertex {n}")
    header += [f"property double {name}" for name in names]
    header.append("end_header")
    flat = np.empty((n, len(names)))
    flat[:, 0:3] = model.means
    flat[:, 3:6] = model.sh[:, 0, :]
    flat[:, 6:51] = np.transpose(model.sh[:, 1:, :], (0, 2, 1)).reshape(n, 3 * (shmod.N_COEFFS - 1))
    flat[:, 51] = model.opacity_logits
    flat[:, 52:55] = model.log_scales
    flat[:, 55:59] = model.quats
    rec = np.empty(n, dtype=_vertex_dtype())
    for j, name in enumerate(names):
        rec[name] = flat[:, j]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(rec.tobytes())


def load_ply(path) -> GaussianModel:
    raw = Path(path).read_bytes()
    marker = b"end_header\n"
    end = raw.find(marker)
    if end < 0:
        raise ValueError(f"{path}: missing end_header")
    header = raw[:end].decode("ascii").splitlines()
    if not header or header[0] != "ply" or "format binary_little_endian 1.0" not in header:
        raise ValueError(f"{path}: expected a binary little-endian PLY")
    degree = 0
    n = None
    props = []
    for ln in header:
        parts = ln.split()
        if parts[:2] == ["comment", "active_sh_degree"]:
            degree = int(parts[2])
        elif parts[:2] == ["element", "vertex"]:
            n = int(parts[2])
        elif parts and parts[0] == "property":
            props.append((parts[2], parts[1]))
    names = ply_property_names()
    if n is None or [p[0] for p in props] != names:
        raise ValueError(f"{path}: unexpected vertex layout")
    type_map = {"double": "<f8", "float": "<f4"}
    dtype = np.dtype([(name, type_map[t]) for name, t in props])
    rec = np.frombuffer(raw, dtype=dtype, count=n, offset=end + len(marker))
    flat = np.stack([rec[name].astype(float) for name in names], axis=1) if n else np.zeros((0, len(names)))
    sh = np.empty((n, shmod.N_COEFFS, 3))
    sh[:, 0, :] = flat[:, 3:6]
    sh[:, 1:, :] = np.transpose(flat[:, 6:51].reshape(n, 3, shmod.N_COEFFS - 1), (0, 2, 1))
    return GaussianModel(flat[:, 0:3], flat[:, 52:55], flat[:, 55:59], flat[:, 51], sh, degree)
