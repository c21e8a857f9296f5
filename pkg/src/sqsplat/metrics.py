"""Image and geometry metrics, the training loss, and time-to-threshold bookkeeping."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.spatial import cKDTree

from .errors import DimensionMismatch, EmptyCloud, OutOfOrderRecord
from .gaussians import GaussianModel
from .pointcloud import PointCloud

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
PSNR_CAP = 100.0
DEFAULT_BETA = 0.2
CHAMFER_OPACITY_MIN = 0.1
BRUTE_FORCE_MAX = 64


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return a, b


def l1_image(render, truth) -> float:
    r, t = _pair(render, truth)
    return float(np.mean(np.abs(r - t)))


def mse(render, truth) -> float:
    r, t = _pair(render, truth)
    return float(np.mean((r - t) ** 2))


def psnr(render, truth) -> float:
    return psnr_from_mse(mse(render, truth))


def psnr_from_mse(m: float) -> float:
    if m < 1e-10:
        return PSNR_CAP
    return min(PSNR_CAP, 20.0 * math.log10(1.0 / math.sqrt(m)))


def _gray(img):
    img = np.asarray(img, dtype=float)
    return img.mean(axis=-1) if img.ndim == 3 else img


def _ssim_terms(x, y):
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    vx, vy = np.mean(dx * dx), np.mean(dy * dy)
    cxy = np.mean(dx * dy)
    a1 = 2 * mx * my + SSIM_C1
    a2 = 2 * cxy + SSIM_C2
    b1 = mx * mx + my * my + SSIM_C1
    b2 = vx + vy + SSIM_C2
    return mx, my, a1, a2, b1, b2


def ssim(a, b, window: int | None = None, sigma: float = 1.5) -> float:
    """SSIM of the channel-mean grayscale images.

    With ``window=None`` the statistics are taken over the whole image.
    Passing a window size switches to the Gaussian-weighted local form
    (``sigma`` standard deviation, truncated at ``window // 2``) averaged over pixels.
    """
    a, b = _pair(a, b)
    x, y = _gray(a), _gray(b)
    if window is None:
        if np.array_equal(x, y):
            return 1.0
        _, _, a1, a2, b1, b2 = _ssim_terms(x, y)
        # Rounding can push near-identical images a hair past 1.
        return float(np.clip(a1 * a2 / (b1 * b2), -1.0, 1.0))
    truncate = (window // 2) / sigma
    f = lambda img: gaussian_filter(img, sigma, mode="reflect", truncate=truncate)
    mx, my = f(x), f(y)
    vx = f(x * x) - mx * mx
    vy = f(y * y) - my * my
    cxy = f(x * y) - mx * my
    s = ((2 * mx * my + SSIM_C1) * (2 * cxy + SSIM_C2)) / (
        (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2)
    )
    return float(np.clip(np.mean(s), -1.0, 1.0))


def ssim_grad(render, truth) -> tuple[float, np.ndarray]:
    """Global SSIM and its gradient w.r.t. every channel of ``render``."""
    r, t = _pair(render, truth)
    x, y = _gray(r), _gray(t)
    n = x.size
    mx, my, a1, a2, b1, b2 = _ssim_terms(x, y)
    s = a1 * a2 / (b1 * b2)
    d_a1 = 2 * my / n
    d_a2 = 2 * (y - my) / n
    d_b1 = 2 * mx / n
    d_b2 = 2 * (x - mx) / n
    g = (d_a1 * a2 + a1 * d_a2) / (b1 * b2) - s * (d_b1 / b1 + d_b2 / b2)
    if r.ndim == 3:
        g = np.repeat((g / r.shape[-1])[..., None], r.shape[-1], axis=-1)
    if np.array_equal(x, y):
        s = 1.0
    return float(np.clip(s, -1.0, 1.0)), g


def combined_loss(render, truth, beta: float = DEFAULT_BETA) -> tuple[float, dict]:
    """``(1 - beta) * L1 + beta * (1 - SSIM)`` and its components."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    l1 = l1_image(render, truth)
    s = ssim(render, truth)
    return loss_from_components(l1, s, beta), {"l1": l1, "ssim": s}


def loss_from_components(l1: float, ssim_value: float, beta: float = DEFAULT_BETA) -> float:
    return (1.0 - beta) * l1 + beta * (1.0 - ssim_value)


def combined_loss_grad(render, truth, beta: float = DEFAULT_BETA):
    """Loss, components and ``dL/drender``. The L1 subgradient at zero is 0."""
    r, t = _pair(render, truth)
    diff = r - t
    l1 = float(np.mean(np.abs(diff)))
    s, g_s = ssim_grad(r, t)
    grad = (1.0 - beta) * np.sign(diff) / diff.size - beta * g_s
    m = float(np.mean(diff * diff))
    comps = {"l1": l1, "ssim": s, "mse": m, "psnr": psnr_from_mse(m)}
    return loss_from_components(l1, s, beta), comps, grad


# -- chamfer ---------------------------------------------------------------

def _points(c) -> np.ndarray:
    pts = c.points if isinstance(c, PointCloud) else np.asarray(c, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise EmptyCloud("chamfer distance needs two nonempty clouds")
    return pts


def nearest_sq_dists_bruteforce(src, dst) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((src[:, None, :] - dst[None, :, :]) ** 2).sum(-1)
    j = np.argmin(d2, axis=1)
    return d2[np.arange(len(src)), j], j


def nearest_sq_dists(src, dst, tree: cKDTree | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Squared distance from each ``src`` point to its nearest ``dst`` point, and that index."""
    if tree is None and len(dst) <= BRUTE_FORCE_MAX:
        return nearest_sq_dists_bruteforce(src, dst)
    tree = tree if tree is not None else cKDTree(dst)
    _, j = tree.query(src, k=1)
    d = src - dst[j]
    return np.einsum("ij,ij->i", d, d), j


def chamfer(S0, S1) -> float:
    a, b = _points(S0), _points(S1)
    d_ab, _ = nearest_sq_dists(a, b)
    d_ba, _ = nearest_sq_dists(b, a)
    return float(d_ab.mean() + d_ba.mean())


def chamfer_bruteforce(S0, S1) -> float:
    a, b = _points(S0), _points(S1)
    return float(nearest_sq_dists_bruteforce(a, b)[0].mean() + nearest_sq_dists_bruteforce(b, a)[0].mean())


def model_points(model: GaussianModel, min_opacity: float = CHAMFER_OPACITY_MIN) -> np.ndarray:
    return model.means[model.opacities > min_opacity]


def model_chamfer(model: GaussianModel, truth) -> float:
    pts = model_points(model)
    if len(pts) == 0:
        raise EmptyCloud("no Gaussian passes the opacity filter")
    return chamfer(pts, truth)


# -- logging and thresholds -------------------------------------------------

@dataclass
class MetricsRecord:
    iteration: int
    wall_time_s: float
    loss: float
    l1: float
    ssim: float
    psnr: float
    chamfer: float = float("nan")


CSV_FIELDS = ("iteration", "wall_time_s", "loss", "l1", "ssim", "psnr", "chamfer")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".9g")


def write_metrics_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for rec in records:
            w.writerow([_fmt(getattr(rec, f)) for f in CSV_FIELDS])


def read_metrics_csv(path) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append(
            MetricsRecord(
                int(row["iteration"]),
                *(float(row[f]) for f in CSV_FIELDS[1:]),
            )
        )
    return out


@dataclass
class ThresholdTracker:
    """Iterations and wall time until a metric first gets within ``m x best``.

    ``best`` is only known after the run, so hits are resolved by
    :meth:`finalize` over the stored log. Lower metric values are better.
    """

    multipliers: tuple = (2.0, 1.5, 1.1)
    metric: str = "l1"
    best_metric: float = float("inf")
    first_hit: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    def update(self, rec: MetricsRecord) -> "ThresholdTracker":
        if self.history and rec.iteration < self.history[-1][0]:
            raise OutOfOrderRecord(f"iteration {rec.iteration} after {self.history[-1][0]}")
        value = float(getattr(rec, self.metric))
        self.history.append((rec.iteration, rec.wall_time_s, value))
        if value < self.best_metric:
            self.best_metric = value
        return self

    def finalize(self) -> dict:
        self.first_hit = {}
        for m in self.multipliers:
            limit = m * self.best_metric
            for it, wt, v in self.history:
                if v <= limit:
                    self.first_hit[float(m)] = (it, wt)
                    break
        return self.first_hit

    def to_dict(self) -> dict:
        self.finalize()
        return {
            "metric": self.metric,
            "best": self.best_metric,
            "hits": {str(float(m)): {"iter": it, "time_s": t} for m, (it, t) in self.first_hit.items()},
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def tracker_update(t: ThresholdTracker, rec: MetricsRecord) -> ThresholdTracker:
    return t.update(rec)


def record_dict(rec: MetricsRecord) -> dict:
    return asdict(rec)
