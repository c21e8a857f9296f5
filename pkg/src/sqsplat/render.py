"""Forward splatting: projection to the image plane and front-to-back compositing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sh as shmod
from ._kernels import ALPHA_MAX, ALPHA_MIN, T_MIN, rasterize_forward
from .camera import CameraView
from .gaussians import Gaussian3D, GaussianModel, covariance_matrices, sigmoid

NEAR_PLANE = 0.01
BLUR_FLOOR = 0.3
CULL_SIGMA = 3.0


@dataclass
class ProjectedGaussian:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    color: np.ndarray
    opacity: float
    source_index: int


@dataclass
class Projection:
    """Stacked projection of the Gaussians that survived culling.

    Besides the screen-space quantities it keeps the intermediates that the
    backward pass reuses (camera-frame means, Jacobians, SH inputs).
    """

    index: np.ndarray  # source index into the model
    mean2d: np.ndarray
    cov2d: np.ndarray
    conic: np.ndarray  # (a, b, c) of the inverse 2D covariance
    depth: np.ndarray
    color: np.ndarray
    opacity: np.ndarray
    rect: np.ndarray  # (x0, x1, y0, y1) inclusive pixel bounds
    p_cam: np.ndarray
    J: np.ndarray
    cov3d: np.ndarray
    view_dir: np.ndarray
    view_vec_norm: np.ndarray
    color_raw: np.ndarray  # before clamping to [0, 1]
    sh_degree: int

    def __len__(self) -> int:
        return len(self.index)

    def depth_order(self) -> np.ndarray:
        """Front-to-back order; equal depths fall back to source index."""
        return np.lexsort((self.index, self.depth))

    def item(self, k: int) -> ProjectedGaussian:
        return ProjectedGaussian(
            self.mean2d[k].copy(),
            self.cov2d[k].copy(),
            float(self.depth[k]),
            self.color[k].copy(),
            float(self.opacity[k]),
            int(self.index[k]),
        )


def _sh_colors(sh, dirs, degree):
    k = shmod.n_coeffs(degree)
    basis = shmod.sh_basis(dirs)[:, :k]
    return np.einsum("nk,nkc->nc", basis, sh[:, :k, :]) + 0.5


def project_model(model: GaussianModel, cam: CameraView, sh_degree: int | None = None) -> Projection:
    if sh_degree is None:
        sh_degree = model.active_sh_degree
    W, H = cam.width, cam.height
    p_cam = cam.world_to_camera(model.means)
    z = p_cam[:, 2]
    front = z > NEAR_PLANE
    idx = np.nonzero(front)[0]
    p_cam = p_cam[idx]
    x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]
    mean2d = np.stack([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy], axis=1)
    n = len(idx)
    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = cam.fx / z
    J[:, 0, 2] = -cam.fx * x / (z * z)
    J[:, 1, 1] = cam.fy / z
    J[:, 1, 2] = -cam.fy * y / (z * z)
    cov3d = covariance_matrices(model.quats[idx], model.log_scales[idx])
    M = J @ cam.R
    cov2d = M @ cov3d @ np.swapaxes(M, 1, 2)
    cov2d[:, 0, 0] += BLUR_FLOOR
    cov2d[:, 1, 1] += BLUR_FLOOR
    A, B, C = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = A * C - B * B
    conic = np.stack([C / det, -B / det, A / det], axis=1)
    mid = 0.5 * (A + C)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radius = CULL_SIGMA * np.sqrt(lam_max)
    x0 = np.maximum(np.ceil(mean2d[:, 0] - radius), 0)
    x1 = np.minimum(np.floor(mean2d[:, 0] + radius), W - 1)
    y0 = np.maximum(np.ceil(mean2d[:, 1] - radius), 0)
    y1 = np.minimum(np.floor(mean2d[:, 1] + radius), H - 1)
    on_screen = (x0 <= x1) & (y0 <= y1)
    keep = np.nonzero(on_screen)[0]

    idx = idx[keep]
    p_cam = p_cam[keep]
    rect = np.stack([x0, x1, y0, y1], axis=1)[keep].astype(np.int64)
    view_vec = model.means[idx] - cam.center
    vnorm = np.linalg.norm(view_vec, axis=1)
    view_dir = view_vec / vnorm[:, None]
    color_raw = _sh_colors(model.sh[idx], view_dir, sh_degree)
    return Projection(
        index=idx,
        mean2d=mean2d[keep],
        cov2d=cov2d[keep],
        conic=conic[keep],
        depth=p_cam[:, 2].copy(),
        color=np.clip(color_raw, 0.0, 1.0),
        opacity=sigmoid(model.opacity_logits[idx]),
        rect=rect,
        p_cam=p_cam,
        J=J[keep],
        cov3d=cov3d[keep],
        view_dir=view_dir,
        view_vec_norm=vnorm,
        color_raw=color_raw,
        sh_degree=sh_degree,
    )


def project(g: Gaussian3D, cam: CameraView, sh_degree: int) -> ProjectedGaussian | None:
    """Project one Gaussian; ``None`` means it was culled."""
    proj = project_model(GaussianModel.from_gaussians([g]), cam, sh_degree)
    if len(proj) == 0:
        return None
    return proj.item(0)


@dataclass
class CompositingCache:
    """Per-contribution record of one render, enough for exact gradient replay.

    The entry arrays are in the order contributions were made (Gaussian-major,
    front to back); :meth:`pixel_entries` regroups them per pixel.
    """

    projection: Projection
    height: int
    width: int
    entry_pixel: np.ndarray
    entry_gaussian: np.ndarray  # position in ``projection``
    entry_alpha: np.ndarray
    entry_T: np.ndarray  # transmittance before the contribution
    final_T: np.ndarray

    def __len__(self) -> int:
        return len(self.entry_pixel)

    def pixel_entries(self, u: int, v: int) -> list[tuple[int, float, float]]:
        """``(source_index, alpha, transmittance_before)`` for pixel column ``u``, row ``v``."""
        sel = np.nonzero(self.entry_pixel == v * self.width + u)[0]
        src = self.projection.index[self.entry_gaussian[sel]]
        return [(int(s), float(a), float(t)) for s, a, t in zip(src, self.entry_alpha[sel], self.entry_T[sel])]


def _rasterize(proj: Projection, cam: CameraView, record: bool):
    order = proj.depth_order().astype(np.int64)
    return rasterize_forward(
        proj.mean2d,
        proj.conic,
        proj.opacity,
        proj.color,
        proj.rect,
        order,
        cam.height,
        cam.width,
        record,
    )


def render(model: GaussianModel, cam: CameraView, sh_degree: int | None = None) -> np.ndarray:
    """Render to an ``(H, W, 3)`` float image on a black background."""
    proj = project_model(model, cam, sh_degree)
    img, *_ = _rasterize(proj, cam, False)
    return np.clip(img, 0.0, 1.0)


def render_with_cache(model: GaussianModel, cam: CameraView, sh_degree: int | None = None):
    proj = project_model(model, cam, sh_degree)
    img, final_T, pix, g, a, t = _rasterize(proj, cam, True)
    cache = CompositingCache(proj, cam.height, cam.width, pix, g, a, t, final_T)
    return np.clip(img, 0.0, 1.0), cache


def composite(colors, alphas) -> np.ndarray:
    """Front-to-back compositing of an already ordered list (no cutoffs)."""
    out = np.zeros(3)
    T = 1.0
    for c, a in zip(np.asarray(colors, dtype=float), np.asarray(alphas, dtype=float)):
        out += c * a * T
        T *= 1.0 - a
    return out


__all__ = [
    "ALPHA_MAX",
    "ALPHA_MIN",
    "T_MIN",
    "CompositingCache",
    "ProjectedGaussian",
    "Projection",
    "composite",
    "project",
    "project_model",
    "render",
    "render_with_cache",
]
