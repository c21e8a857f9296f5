"""Real spherical harmonics through degree 3 and their direction gradients.

Basis order and sign convention follow the common splatting layout:
index 0 is the DC term, 1..3 degree one, 4..8 degree two, 9..15 degree three.
"""
from __future__ import annotations

import numpy as np

MAX_DEGREE = 3
N_COEFFS = (MAX_DEGREE + 1) ** 2

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)


def n_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


def sh_basis(dirs) -> np.ndarray:
    """All 16 basis values at unit directions ``(..., 3)`` -> ``(..., 16)``."""
    d = np.asarray(dirs, dtype=float)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    xx, yy, zz = x * x, y * y, z * z
    out = np.empty(d.shape[:-1] + (N_COEFFS,))
    out[..., 0] = C0
    out[..., 1] = -C1 * y
    out[..., 2] = C1 * z
    out[..., 3] = -C1 * x
    out[..., 4] = C2[0] * x * y
    out[..., 5] = C2[1] * y * z
    out[..., 6] = C2[2] * (2 * zz - xx - yy)
    out[..., 7] = C2[3] * x * z
    out[..., 8] = C2[4] * (xx - yy)
    out[..., 9] = C3[0] * y * (3 * xx - yy)
    out[..., 10] = C3[1] * x * y * z
    out[..., 11] = C3[2] * y * (4 * zz - xx - yy)
    out[..., 12] = C3[3] * z * (2 * zz - 3 * xx - 3 * yy)
    out[..., 13] = C3[4] * x * (4 * zz - xx - yy)
    out[..., 14] = C3[5] * z * (xx - yy)
    out[..., 15] = C3[6] * x * (xx - 3 * yy)
    return out


def sh_basis_grad(dirs) -> np.ndarray:
    """Partial derivatives of the basis polynomials, ``(..., 16, 3)``.

    Derivatives are of the polynomials in (x, y, z); callers project them
    through the direction normalization themselves.
    """
    d = np.asarray(dirs, dtype=float)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    xx, yy, zz = x * x, y * y, z * z
    zero = np.zeros_like(x)
    g = np.zeros(d.shape[:-1] + (N_COEFFS, 3))
    g[..., 1, :] = np.stack([zero, zero - C1, zero], -1)
    g[..., 2, :] = np.stack([zero, zero, zero + C1], -1)
    g[..., 3, :] = np.stack([zero - C1, zero, zero], -1)
    g[..., 4, :] = C2[0] * np.stack([y, x, zero], -1)
    g[..., 5, :] = C2[1] * np.stack([zero, z, y], -1)
    g[..., 6, :] = C2[2] * np.stack([-2 * x, -2 * y, 4 * z], -1)
    g[..., 7, :] = C2[3] * np.stack([z, zero, x], -1)
    g[..., 8, :] = C2[4] * np.stack([2 * x, -2 * y, zero], -1)
    g[..., 9, :] = C3[0] * np.stack([6 * x * y, 3 * xx - 3 * yy, zero], -1)
    g[..., 10, :] = C3[1] * np.stack([y * z, x * z, x * y], -1)
    g[..., 11, :] = C3[2] * np.stack([-2 * x * y, 4 * zz - xx - 3 * yy, 8 * y * z], -1)
    g[..., 12, :] = C3[3] * np.stack([-6 * x * z, -6 * y * z, 6 * zz - 3 * xx - 3 * yy], -1)
    g[..., 13, :] = C3[4] * np.stack([4 * zz - 3 * xx - yy, -2 * x * y, 8 * x * z], -1)
    g[..., 14, :] = C3[5] * np.stack([2 * x * z, -2 * y * z, xx - yy], -1)
    g[..., 15, :] = C3[6] * np.stack([3 * xx - 3 * yy, -6 * x * y, zero], -1)
    return g


def rgb_to_dc(rgb) -> np.ndarray:
    """DC coefficient whose degree-0 evaluation (plus the 0.5 offset) is ``rgb``."""
    return (np.asarray(rgb, dtype=float) - 0.5) / C0


def dc_to_rgb(dc) -> np.ndarray:
    return np.asarray(dc, dtype=float) * C0 + 0.5
