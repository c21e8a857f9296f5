"""Rotation representations: 6D vectors, quaternions, DCMs and geodesic distance.

Rotations are plain ``(3, 3)`` float arrays acting on column vectors.
Quaternions are stored scalar-first, ``(w, x, y, z)``.
"""
from __future__ import annotations

import numpy as np

from .errors import DegenerateRotation

_NORM_EPS = 1e-12

# Identity plus the three 180-degree flips about the body axes.
PERMUTATIONS = np.array(
    [
        np.diag([1.0, 1.0, 1.0]),
        np.diag([1.0, -1.0, -1.0]),
        np.diag([-1.0, 1.0, -1.0]),
        np.diag([-1.0, -1.0, 1.0]),
    ]
)


def rot6d_to_dcm(r) -> np.ndarray:
    """Gram-Schmidt a 6-vector ``[a, b]`` into a right-handed rotation matrix.

    Columns of the result are ``e1 = a/|a|``, ``e2`` the normalized part of
    ``b`` orthogonal to ``e1``, and ``e3 = e1 x e2``.
    """
    r = np.asarray(r, dtype=float).reshape(6)
    a, b = r[:3], r[3:]
    na = np.linalg.norm(a)
    if not na > _NORM_EPS:
        raise DegenerateRotation(f"first 6D column has norm {na:g}")
    e1 = a / na
    bp = b - np.dot(e1, b) * e1
    nb = np.linalg.norm(bp)
    if not nb > _NORM_EPS:
        raise DegenerateRotation(f"second 6D column is parallel to the first (residual {nb:g})")
    e2 = bp / nb
    e3 = np.cross(e1, e2)
    return np.stack([e1, e2, e3], axis=1)


def dcm_to_rot6d(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    return np.concatenate([R[:, 0], R[:, 1]])


def rot6d_backward(r, grad_R) -> np.ndarray:
    """Pull a gradient w.r.t. the DCM back to the 6D vector that produced it."""
    r = np.asarray(r, dtype=float).reshape(6)
    G = np.asarray(grad_R, dtype=float)
    a, b = r[:3], r[3:]
    na = np.linalg.norm(a)
    e1 = a / na
    proj = np.dot(e1, b)
    bp = b - proj * e1
    nb = np.linalg.norm(bp)
    e2 = bp / nb
    g1, g2, g3 = G[:, 0], G[:, 1], G[:, 2]
    # e3 = e1 x e2
    d_e1 = g1 + np.cross(e2, g3)
    d_e2 = g2 + np.cross(g3, e1)
    d_bp = (d_e2 - e2 * np.dot(e2, d_e2)) / nb
    d_b = d_bp - e1 * np.dot(e1, d_bp)
    d_e1 = d_e1 - (proj * d_bp + np.dot(e1, d_bp) * b)
    d_a = (d_e1 - e1 * np.dot(e1, d_e1)) / na
    return np.concatenate([d_a, d_b])


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(
        np.max(np.abs(R @ R.T - np.eye(3))) <= tol and abs(np.linalg.det(R) - 1.0) <= tol
    )


def check_rotation(R, tol: float = 1e-9) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, tol):
        raise DegenerateRotation("matrix is not a proper rotation")
    return R


def project_to_so3(M) -> np.ndarray:
    """Nearest proper rotation in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def geodesic_angle(Ra, Rb) -> float:
    """Angle of ``Ra^T Rb`` in degrees, in ``[0, 180]``."""
    Ra = np.asarray(Ra, dtype=float)
    Rb = np.asarray(Rb, dtype=float)
    c = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def permutation_set(R) -> list[np.ndarray]:
    """``R @ P`` for each of the four axis-flip ambiguity matrices."""
    R = np.asarray(R, dtype=float)
    return [R @ P for P in PERMUTATIONS]


def axis_angle_to_dcm(axis, angle: float) -> np.ndarray:
    """Rodrigues formula; ``angle`` in radians."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return np.eye(3)
    k = axis / n
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def quat_to_dcm(q) -> np.ndarray:
    """Rotation matrix of a (not necessarily unit) quaternion; works on ``(..., 4)``."""
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def quat_to_dcm_jacobian(q) -> np.ndarray:
    """``dR/dq_hat`` for unit quaternions, shape ``(..., 4, 3, 3)``."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    zero = np.zeros_like(w)

    def mat(rows):
        return np.stack([np.stack(row, axis=-1) for row in rows], axis=-2)

    dw = mat([[zero, -z, y], [z, zero, -x], [-y, x, zero]])
    dx = mat([[zero, y, z], [y, -2 * x, -w], [z, w, -2 * x]])
    dy = mat([[-2 * y, x, w], [x, zero, z], [-w, z, -2 * y]])
    dz = mat([[-2 * z, -w, x], [w, -2 * z, y], [x, y, zero]])
    return 2.0 * np.stack([dw, dx, dy, dz], axis=-3)


def dcm_to_quat(R) -> np.ndarray:
    """Unit quaternion ``(w, x, y, z)`` with ``w >= 0``."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def uniform_quaternion(u) -> np.ndarray:
    """Map points of the unit cube ``(..., 3)`` to quaternions uniform on SO(3).

    Shoemake's construction; uniform input gives Haar-distributed rotations.
    """
    u = np.asarray(u, dtype=float)
    u1, u2, u3 = u[..., 0], u[..., 1], u[..., 2]
    a = np.sqrt(1.0 - u1)
    b = np.sqrt(u1)
    return np.stack(
        [
            b * np.cos(2 * np.pi * u3),
            a * np.sin(2 * np.pi * u2),
            a * np.cos(2 * np.pi * u2),
            b * np.sin(2 * np.pi * u3),
        ],
        axis=-1,
    )


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return quat_to_dcm(uniform_quaternion(rng.random(3)))
