"""Analytic gradients of the training loss w.r.t. every Gaussian parameter.

The chain runs: loss -> pixels (L1 + global SSIM) -> compositing replay ->
2D mean / conic / opacity / color -> projection Jacobian and camera-frame
mean -> covariance factors (scale, quaternion) and SH coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import sh as shmod
from .._kernels import rasterize_backward
from ..camera import CameraView
from ..gaussians import GaussianModel
from ..metrics import combined_loss_grad
from ..render import render_with_cache
from ..rotations import quat_to_dcm, quat_to_dcm_jacobian


@dataclass
class GradientBuffer:
    means: np.ndarray
    log_scales: np.ndarray
    quats: np.ndarray
    opacity_logits: np.ndarray
    sh: np.ndarray
    # Screen-space (NDC) gradient norm of each visible Gaussian's 2D mean, this step.
    mean2d_norm: np.ndarray
    visible: np.ndarray

    @classmethod
    def zeros_like(cls, model: GaussianModel) -> "GradientBuffer":
        n = len(model)
        return cls(
            np.zeros((n, 3)),
            np.zeros((n, 3)),
            np.zeros((n, 4)),
            np.zeros(n),
            np.zeros((n, shmod.N_COEFFS, 3)),
            np.zeros(n),
            np.zeros(n, dtype=bool),
        )

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in GaussianModel.PARAM_NAMES}


@dataclass
class BackwardResult:
    loss: float
    components: dict
    grads: GradientBuffer
    image: np.ndarray


def backward(
    model: GaussianModel,
    cam: CameraView,
    truth,
    beta: float = 0.2,
    sh_degree: int | None = None,
) -> BackwardResult:
    """Render, evaluate the loss against ``truth`` and backpropagate."""
    image, cache = render_with_cache(model, cam, sh_degree)
    loss, comps, dl_dimg = combined_loss_grad(image, truth, beta)
    grads = backward_from_cache(model, cam, cache, dl_dimg)
    return BackwardResult(loss, comps, grads, image)


def backward_from_cache(model: GaussianModel, cam: CameraView, cache, dl_dimg) -> GradientBuffer:
    proj = cache.projection
    grads = GradientBuffer.zeros_like(model)
    if len(proj) == 0:
        return grads
    g_mean2d, g_conic, g_opac, g_color = rasterize_backward(
        cache.entry_pixel,
        cache.entry_gaussian,
        cache.entry_alpha,
        cache.entry_T,
        proj.mean2d,
        proj.conic,
        proj.opacity,
        proj.color,
        np.ascontiguousarray(dl_dimg.reshape(-1, 3)),
        cam.width,
    )
    idx = proj.index
    n = len(idx)

    # opacity = sigmoid(logit)
    grads.opacity_logits[idx] = g_opac * proj.opacity * (1.0 - proj.opacity)

    # color = clamp(sum_k sh_k Y_k(dir) + 0.5)
    inside = (proj.color_raw > 0.0) & (proj.color_raw < 1.0)
    g_craw = g_color * inside
    k = shmod.n_coeffs(proj.sh_degree)
    basis = shmod.sh_basis(proj.view_dir)[:, :k]
    grads.sh[idx, :k, :] = basis[:, :, None] * g_craw[:, None, :]
    g_mean = np.zeros((n, 3))
    if k > 1:
        dbasis = shmod.sh_basis_grad(proj.view_dir)[:, :k, :]
        coef = np.einsum("nkc,nc->nk", model.sh[idx, :k, :], g_craw)
        g_dir = np.einsum("nk,nkd->nd", coef, dbasis)
        d = proj.view_dir
        g_dir -= d * np.einsum("nd,nd->n", d, g_dir)[:, None]
        g_mean += g_dir / proj.view_vec_norm[:, None]

    # conic = inverse(cov2d); power uses b twice, so the symmetric matrix gradient has b/2 off-diagonal.
    a, b, c = proj.conic[:, 0], proj.conic[:, 1], proj.conic[:, 2]
    Q = np.empty((n, 2, 2))
    Q[:, 0, 0], Q[:, 0, 1], Q[:, 1, 0], Q[:, 1, 1] = a, b, b, c
    GQ = np.empty((n, 2, 2))
    GQ[:, 0, 0] = g_conic[:, 0]
    GQ[:, 0, 1] = GQ[:, 1, 0] = 0.5 * g_conic[:, 1]
    GQ[:, 1, 1] = g_conic[:, 2]
    G2 = -Q @ GQ @ Q

    # cov2d = M cov3d M^T + floor, M = J R_cw
    J = proj.J
    M = J @ cam.R
    G3 = np.swapaxes(M, 1, 2) @ G2 @ M
    GM = 2.0 * G2 @ M @ proj.cov3d
    GJ = GM @ cam.R.T

    x, y, z = proj.p_cam[:, 0], proj.p_cam[:, 1], proj.p_cam[:, 2]
    fx, fy = cam.fx, cam.fy
    g_pcam = np.zeros((n, 3))
    g_pcam[:, 0] += GJ[:, 0, 2] * (-fx / z**2)
    g_pcam[:, 1] += GJ[:, 1, 2] * (-fy / z**2)
    g_pcam[:, 2] += (
        GJ[:, 0, 0] * (-fx / z**2)
        + GJ[:, 0, 2] * (2 * fx * x / z**3)
        + GJ[:, 1, 1] * (-fy / z**2)
        + GJ[:, 1, 2] * (2 * fy * y / z**3)
    )
    # mean2d = (fx x / z + cx, fy y / z + cy)
    gm = g_mean2d
    g_pcam[:, 0] += gm[:, 0] * fx / z
    g_pcam[:, 1] += gm[:, 1] * fy / z
    g_pcam[:, 2] += -gm[:, 0] * fx * x / z**2 - gm[:, 1] * fy * y / z**2
    g_mean += g_pcam @ cam.R
    grads.means[idx] = g_mean

    # cov3d = (R_q S)(R_q S)^T
    q = model.quats[idx]
    qn = np.linalg.norm(q, axis=1, keepdims=True)
    q_hat = q / qn
    Rq = quat_to_dcm(q_hat)
    s = np.exp(model.log_scales[idx])
    Ms = Rq * s[:, None, :]
    G_Ms = 2.0 * G3 @ Ms
    grads.log_scales[idx] = np.einsum("nij,nij->nj", G_Ms, Rq) * s
    G_Rq = G_Ms * s[:, None, :]
    dR = quat_to_dcm_jacobian(q_hat)
    g_qhat = np.einsum("nkij,nij->nk", dR, G_Rq)
    g_q = (g_qhat - q_hat * np.einsum("nk,nk->n", q_hat, g_qhat)[:, None]) / qn
    grads.quats[idx] = g_q

    # NDC-space gradient magnitude for the densification statistic
    ndc = np.stack([gm[:, 0] * 0.5 * cam.width, gm[:, 1] * 0.5 * cam.height], axis=1)
    grads.mean2d_norm[idx] = np.linalg.norm(ndc, axis=1)
    grads.visible[idx] = True
    return grads
