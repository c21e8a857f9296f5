"""Rotation recovery by chamfer-distance minimization between point clouds.

A single refinement is plain first-order descent on the 6D rotation
parameterization with nearest neighbours refreshed at every evaluation and a
backtracking step. :func:`align_multistart` runs it from a fixed set of
quasi-random starts and keeps the best.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .errors import EmptyCloud
from .pointcloud import PointCloud
from .rotations import dcm_to_rot6d, rot6d_backward, rot6d_to_dcm, uniform_quaternion, quat_to_dcm
from .superquadric import PrimitiveAssembly, assembly_to_pointcloud

DEFAULT_STARTS = 16
MAX_POINTS = 1024
# Scrambling seed of the start sequence; picked once so that 16 starts are
# more than 40 degrees apart pairwise.
START_SEED = 14


@dataclass
class AlignOptions:
    max_steps: int = 200
    rel_tol: float = 1e-6
    # Absolute floor: below this chamfer value the clouds are considered coincident.
    abs_tol: float = 1e-14
    init_step: float = 0.1  # radians, roughly
    max_backtracks: int = 30
    max_points: int = MAX_POINTS
    workers: int = 1


@dataclass
class AlignmentResult:
    rotation: np.ndarray
    chamfer_final: float
    start_index: int
    iterations_used: int

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation.tolist(),
            "chamfer": self.chamfer_final,
            "start": self.start_index,
            "iterations": self.iterations_used,
        }


def _as_points(c) -> np.ndarray:
    pts = c.points if isinstance(c, PointCloud) else np.asarray(c, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise EmptyCloud("alignment needs two nonempty clouds")
    return pts


def apply_rotation(S, R) -> PointCloud:
    """Map every point ``p`` to ``R @ p`` (normals too, when present)."""
    R = np.asarray(R, dtype=float)
    if isinstance(S, PointCloud):
        normals = None if S.normals is None else S.normals @ R.T
        return PointCloud(S.points @ R.T, normals)
    return PointCloud(np.asarray(S, dtype=float).reshape(-1, 3) @ R.T)


def quasi_random_rotations(n: int, seed: int = START_SEED) -> list[np.ndarray]:
    """``n`` rotations from a scrambled Sobol sequence pushed through the uniform-quaternion map."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sampler = qmc.Sobol(d=3, scramble=True, seed=seed)
    with warnings.catch_warnings():
        # Sobol warns when n is not a power of two; the prefix is still deterministic.
        warnings.simplefilter("ignore", UserWarning)
        u = sampler.random(n)
    return [quat_to_dcm(uniform_quaternion(row)) for row in u]


class _ChamferObjective:
    """``chamfer(S0, R @ Si)`` and its gradient w.r.t. ``R``, with static trees.

    Rotations are isometries, so the nearest neighbour of ``x`` among ``R @ Si``
    is found by querying ``R^T x`` against a tree built once on ``Si``.
    """

    def __init__(self, S0: np.ndarray, Si: np.ndarray):
        self.x = S0
        self.y = Si
        self.tx = cKDTree(S0)
        self.ty = cKDTree(Si)

    def value(self, R) -> tuple[float, tuple]:
        x, y = self.x, self.y
        Ry = y @ R.T
        _, jx = self.ty.query(x @ R, k=1)  # for each x, nearest R y
        _, jy = self.tx.query(Ry, k=1)  # for each R y, nearest x
        d1 = x - Ry[jx]
        d2 = Ry - x[jy]
        cd = np.einsum("ij,ij->", d1, d1) / len(x) + np.einsum("ij,ij->", d2, d2) / len(y)
        return float(cd), (jx, d1, d2)

    def grad(self, aux) -> np.ndarray:
        jx, d1, d2 = aux
        # d/dR |x - R y|^2 = -2 (x - R y) y^T ; d/dR |R y - x|^2 = 2 (R y - x) y^T
        return -2.0 * d1.T @ self.y[jx] / len(self.x) + 2.0 * d2.T @ self.y / len(self.y)


def _reortho(r) -> np.ndarray:
    return dcm_to_rot6d(rot6d_to_dcm(r))


def _refine(obj: _ChamferObjective, R_init, opts: AlignOptions) -> tuple[np.ndarray, float, int]:
    r = dcm_to_rot6d(R_init)
    R = rot6d_to_dcm(r)
    f, aux = obj.value(R)
    step = None
    used = 0
    for used in range(1, opts.max_steps + 1):
        if f <= opts.abs_tol:
            used -= 1
            break
        g = rot6d_backward(r, obj.grad(aux))
        gn = np.linalg.norm(g)
        if gn == 0.0:
            break
        if step is None:
            step = opts.init_step / gn
        accepted = False
        for _ in range(opts.max_backtracks):
            r_new = _reortho(r - step * g)
            R_new = rot6d_to_dcm(r_new)
            f_new, aux_new = obj.value(R_new)
            if f_new < f:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        improvement = (f - f_new) / f
        r, R, f, aux = r_new, R_new, f_new, aux_new
        step *= 2.0
        if improvement < opts.rel_tol:
            break
    return R, f, used


def refine_rotation(S0, Si, R_init, opts: AlignOptions | None = None) -> AlignmentResult:
    """Descend ``chamfer(S0, apply_rotation(Si, R))`` from ``R_init``.

    The returned chamfer is never above the starting value.
    """
    opts = opts or AlignOptions()
    a = PointCloud(_as_points(S0)).subsample(opts.max_points).points
    b = PointCloud(_as_points(Si)).subsample(opts.max_points).points
    obj = _ChamferObjective(a, b)
    R, f, used = _refine(obj, np.asarray(R_init, dtype=float), opts)
    return AlignmentResult(R, f, 0, used)


def align_multistart(
    S0, Si, n_starts: int = DEFAULT_STARTS, opts: AlignOptions | None = None, starts=None
) -> AlignmentResult:
    """Best of :func:`refine_rotation` over quasi-random starts.

    Ties in chamfer are broken by the lower start index.
    """
    opts = opts or AlignOptions()
    a = PointCloud(_as_points(S0)).subsample(opts.max_points).points
    b = PointCloud(_as_points(Si)).subsample(opts.max_points).points
    obj = _ChamferObjective(a, b)
    starts = quasi_random_rotations(n_starts) if starts is None else list(starts)

    def run(k):
        R, f, used = _refine(obj, starts[k], opts)
        return AlignmentResult(R, f, k, used)

    if opts.workers > 1:
        with ThreadPoolExecutor(opts.workers) as pool:
            results = list(pool.map(run, range(len(starts))))
    else:
        results = [run(k) for k in range(len(starts))]
    return min(results, key=lambda res: (res.chamfer_final, res.start_index))


def implicit_pose_stream(
    assemblies: list[PrimitiveAssembly],
    translations,
    n_starts: int = DEFAULT_STARTS,
    points_per_primitive: int = 300,
    opts: AlignOptions | None = None,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-frame target rotation relative to the first frame, plus pass-through translations.

    Each estimate ``R_i`` is the rotation carrying the first assembly's cloud
    onto frame ``i``'s cloud, i.e. the transpose of the aligning rotation.
    """
    if len(assemblies) == 0:
        raise ValueError("need at least one assembly")
    if len(assemblies) != len(translations):
        raise ValueError("assemblies and translations differ in length")
    base = assembly_to_pointcloud(assemblies[0], points_per_primitive)
    out = [(np.eye(3), np.asarray(translations[0], dtype=float))]
    for asm, t in zip(assemblies[1:], translations[1:]):
        cloud = assembly_to_pointcloud(asm, points_per_primitive)
        res = align_multistart(base, cloud, n_starts, opts)
        out.append((res.rotation.T, np.asarray(t, dtype=float)))
    return out
