"""Synthetic satellites, orbit views, truth renders and a noisy pose/shape estimator."""
from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from . import dataio
from .camera import CameraView
from .errors import IoFailure
from .gaussians import GaussianModel, from_pointcloud, load_ply as load_gaussians, save_ply as save_gaussians
from .pointcloud import PointCloud, load_ply as load_cloud, save_ply as save_cloud
from .render import render
from .rotations import PERMUTATIONS, axis_angle_to_dcm, geodesic_angle
from .superquadric import PrimitiveAssembly, SuperquadricParams, assembly_to_pointcloud

MAX_PRIMITIVES = 8
TRUTH_POINTS = 10_000
TRUTH_OPACITY = 0.95
# Grid samples bunch toward edges; slightly fatter splats close the gaps.
TRUTH_SCALE_FACTOR = 1.5
LIGHT_DIR = np.array([0.5, -0.4, 0.77]) / np.linalg.norm([0.5, -0.4, 0.77])
AMBIENT = 0.35

BODY_COLOR = (0.85, 0.65, 0.25)
PANEL_COLORS = ((0.15, 0.25, 0.7), (0.2, 0.45, 0.8), (0.1, 0.55, 0.6), (0.35, 0.2, 0.75))
PART_COLORS = ((0.85, 0.85, 0.85), (0.6, 0.6, 0.6), (0.75, 0.3, 0.2))

# Mean and std of rotation error (degrees) and translation error (relative)
# reported for the three estimator variants, per data split.
TABLE6 = {
    "original": {"train": ((62.632, 28.657), (0.054, 0.048)), "test": ((70.614, 22.213), (0.099, 0.075))},
    "ambiguity-aware": {"train": ((62.880, 28.449), (0.073, 0.058)), "test": ((69.497, 23.450), (0.103, 0.081))},
    "ambiguity-free": {"train": ((46.797, 32.190), (0.070, 0.059)), "test": ((63.554, 25.966), (0.092, 0.070))},
}
VARIANTS = tuple(TABLE6)


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named consumer of a run seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


# -- satellite morphology ----------------------------------------------------

_I6 = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0)


def _sq(alpha, eps, trans, taper=(0.0, 0.0)) -> SuperquadricParams:
    return SuperquadricParams(np.array(alpha, float), np.array(eps, float), np.array(trans, float), np.array(_I6), np.array(taper, float))


def build_satellite(m: int, rng: np.random.Generator) -> tuple[PrimitiveAssembly, list]:
    """Box body plus up to four flat panels (+y, -y, +x, -x), then small appendages.

    ``m == 1`` gives a single sphere. Returns the assembly and one RGB per primitive.
    """
    if not 1 <= m <= MAX_PRIMITIVES:
        raise ValueError(f"m_primitives must lie in [1, {MAX_PRIMITIVES}]")
    if m == 1:
        return PrimitiveAssembly((_sq((0.5, 0.5, 0.5), (1.0, 1.0), (0, 0, 0)),)), [BODY_COLOR]
    j = lambda v: v * (1.0 + 0.1 * rng.uniform(-1.0, 1.0))
    bx, by, bz = j(0.3), j(0.25), j(0.22)
    prims = [_sq((bx, by, bz), (0.3, 0.3), (0, 0, 0))]
    colors = [BODY_COLOR]
    pw, pl, gap = j(0.18), j(0.45), 0.05
    panels = [
        _sq((pw, pl, 0.02), (0.3, 0.3), (0, by + gap + pl, 0)),
        _sq((pw, pl, 0.02), (0.3, 0.3), (0, -(by + gap + pl), 0)),
        _sq((pl * 0.6, pw, 0.02), (0.3, 0.3), (bx + gap + pl * 0.6, 0, 0)),
        _sq((pl * 0.6, pw, 0.02), (0.3, 0.3), (-(bx + gap + pl * 0.6), 0, 0)),
    ]
    parts = [
        _sq((0.03, 0.03, j(0.25)), (1.0, 1.0), (0.1, 0.05, bz + 0.25)),
        _sq((0.16, 0.16, 0.04), (1.0, 1.0), (0.0, 0.0, -(bz + 0.05)), taper=(0.4, 0.4)),
        _sq((0.08, 0.06, 0.06), (0.5, 0.5), (-bx * 0.5, by * 0.6, bz + 0.06)),
    ]
    for k in range(m - 1):
        if k < len(panels):
            prims.append(panels[k])
            colors.append(PANEL_COLORS[k])
        else:
            prims.append(parts[k - len(panels)])
            colors.append(PART_COLORS[k - len(panels)])
    return PrimitiveAssembly(tuple(prims)), colors


def principal_axis(cloud: PointCloud) -> np.ndarray:
    """Unit direction of largest spread."""
    pts = cloud.points - cloud.points.mean(axis=0)
    w, v = np.linalg.eigh(pts.T @ pts)
    return v[:, np.argmax(w)]


# -- scenes ----------------------------------------------------------------

@dataclass
class SyntheticScene:
    truth_assembly: PrimitiveAssembly
    truth_cloud: PointCloud
    truth_model: GaussianModel
    views: list
    frames: list  # float32 (H, W, 3)
    seed: int = 0
    extent: float = 1.0
    colors: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.views)

    def stream(self):
        for img, cam in zip(self.frames, self.views):
            yield np.asarray(img, dtype=np.float64), cam


def shaded_truth_model(asm: PrimitiveAssembly, colors, n_points: int = TRUTH_POINTS) -> tuple[GaussianModel, PointCloud]:
    """Dense opaque Gaussians on the assembly surface with baked diffuse shading."""
    per = int(math.ceil(n_points / len(asm)))
    cloud = assembly_to_pointcloud(asm, per, with_normals=True)
    base = np.repeat(np.asarray(colors, dtype=float), per, axis=0)
    shade = AMBIENT + (1.0 - AMBIENT) * np.maximum(cloud.normals @ LIGHT_DIR, 0.0)
    model = from_pointcloud(cloud, init_opacity=TRUTH_OPACITY, scale_factor=TRUTH_SCALE_FACTOR, colors=np.clip(base * shade[:, None], 0.0, 1.0))
    return model, cloud


def orbit_views(n_views: int, resolution: int, radius: float, rng: np.random.Generator) -> list[CameraView]:
    """Cameras at random directions on a sphere around the origin, framing a ball of ``radius``.

    Directions are drawn independently per frame (uniform in azimuth, uniform
    in the sine of elevation up to about 65 degrees) so the stream does not
    sweep the target side by side.
    """
    dist = 3.0 * radius
    half = math.asin(radius / dist)
    f = 0.45 * resolution / math.tan(half)
    c = (resolution - 1) / 2.0
    views = []
    for _ in range(n_views):
        az = rng.uniform(0.0, 2.0 * math.pi)
        el = math.asin(rng.uniform(-0.9, 0.9))
        eye = dist * np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
        views.append(CameraView.look_at(eye, np.zeros(3), (0.0, 0.0, 1.0), f, f, c, c, resolution, resolution))
    return views


def generate_scene(seed: int, m_primitives: int = 3, n_views: int = 60, resolution: int = 64) -> SyntheticScene:
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    asm, colors = build_satellite(m_primitives, substream(seed, "shape"))
    model, cloud = shaded_truth_model(asm, colors)
    radius = float(np.max(np.linalg.norm(cloud.points, axis=1)) + 3.0 * model.scales.max())
    views = orbit_views(n_views, resolution, radius, substream(seed, "views"))
    frames = [render(model, cam).astype(np.float32) for cam in views]
    return SyntheticScene(asm, cloud, model, views, frames, seed, radius, [list(c) for c in colors])


# -- estimator simulation ----------------------------------------------------

def _folded_mean(k: float) -> float:
    """Mean of |N(k, 1)|."""
    return math.sqrt(2.0 / math.pi) * math.exp(-0.5 * k * k) + k * (1.0 - 2.0 * norm.cdf(-k))


def folded_normal_params(mean: float, std: float) -> tuple[float, float]:
    """``(mu, sigma)`` of a normal whose absolute value has the given mean and std.

    When ``std / mean`` is at or above the half-normal ratio no folded normal
    fits; the half-normal with the requested mean is returned instead.
    """
    if mean <= 0.0:
        return 0.0, 0.0
    ratio = std / mean
    cv = lambda k: math.sqrt((k * k + 1.0) / _folded_mean(k) ** 2 - 1.0)
    if ratio >= cv(0.0):
        k = 0.0
    elif ratio <= 1e-6:
        return mean, 0.0
    else:
        k = brentq(lambda k: cv(k) - ratio, 0.0, 1e3)
    sigma = mean / _folded_mean(k)
    return k * sigma, sigma


def gamma_params(mean: float, std: float) -> tuple[float, float]:
    """Shape and scale of a gamma distribution with the given moments."""
    if mean <= 0.0 or std <= 0.0:
        return 0.0, 0.0
    return (mean / std) ** 2, std * std / mean


@dataclass
class EstimatorSim:
    variant: str = "ambiguity-free"
    rot_error_deg: tuple = TABLE6["ambiguity-free"]["train"][0]
    trans_error: tuple = TABLE6["ambiguity-free"]["train"][1]
    shape_perturb: float = 0.1
    # Spread of the rotation axis around the principal axis (ambiguity-free only).
    axis_jitter_deg: float = 5.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        self.rot_error_deg = tuple(float(v) for v in self.rot_error_deg)
        self.trans_error = tuple(float(v) for v in self.trans_error)

    @classmethod
    def from_table(cls, variant: str, split: str = "train", **kw) -> "EstimatorSim":
        rot, trans = TABLE6[variant][split]
        return cls(variant, rot, trans, **kw)

    @classmethod
    def noiseless(cls, variant: str = "ambiguity-free") -> "EstimatorSim":
        return cls(variant, (0.0, 0.0), (0.0, 0.0), 0.0, 0.0)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "rot_error_deg": list(self.rot_error_deg),
            "trans_error": list(self.trans_error),
            "shape_perturb": self.shape_perturb,
            "axis_jitter_deg": self.axis_jitter_deg,
        }


class Estimate(NamedTuple):
    assembly: PrimitiveAssembly
    rotation: np.ndarray  # world -> camera
    translation: np.ndarray
    permutation: np.ndarray  # which axis-flip ambiguity was applied (identity unless ambiguity-aware)


def _unit(rng) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def perturb_assembly(asm: PrimitiveAssembly, scale: float, rng: np.random.Generator) -> PrimitiveAssembly:
    """Relative noise on sizes, positions (in units of primitive size) and tapering."""
    if scale == 0.0:
        return asm
    out = []
    for p in asm:
        alpha = p.alpha * np.maximum(1.0 + scale * rng.normal(size=3), 0.1)
        trans = p.trans + scale * float(np.mean(p.alpha)) * rng.normal(size=3)
        taper = np.clip(p.taper + scale * rng.normal(size=2), -1.0, 1.0)
        out.append(SuperquadricParams(alpha, p.epsilon, trans, p.rot6d, taper))
    return PrimitiveAssembly(tuple(out))


def _error_axis(sim: EstimatorSim, scene: SyntheticScene, rng) -> np.ndarray:
    if sim.variant != "ambiguity-free":
        return _unit(rng)
    axis = principal_axis(scene.truth_cloud)
    jitter = axis_angle_to_dcm(_unit(rng), math.radians(sim.axis_jitter_deg) * abs(rng.normal()))
    return (jitter @ axis) * (1.0 if rng.uniform() < 0.5 else -1.0)


def simulate_estimate(scene: SyntheticScene, view_index: int, sim: EstimatorSim, seed: int) -> Estimate:
    """Noisy shape and pose for one view, drawn from the configured error model.

    The rotation error is an extra body-frame rotation whose angle follows a
    folded normal with the configured moments; the translation error has a
    gamma-distributed length relative to the true range, in a random direction.
    """
    if not 0 <= view_index < len(scene.views):
        raise IndexError(f"view_index {view_index} out of range")
    cam = scene.views[view_index]
    rng = np.random.default_rng([int(seed), int(view_index), zlib.crc32(sim.variant.encode())])

    P = np.eye(3)
    asm = scene.truth_assembly
    if sim.variant == "ambiguity-aware":
        P = PERMUTATIONS[rng.integers(len(PERMUTATIONS))].copy()
        if not np.array_equal(P, np.eye(3)):
            asm = asm.transformed(P)
    asm = perturb_assembly(asm, sim.shape_perturb, rng)

    mu, sigma = folded_normal_params(*sim.rot_error_deg)
    angle = abs(mu + sigma * rng.normal()) if sigma > 0.0 or mu > 0.0 else 0.0
    axis = _error_axis(sim, scene, rng)
    R = cam.R @ P
    if angle > 0.0:
        R = R @ axis_angle_to_dcm(axis, math.radians(angle))

    k, theta = gamma_params(*sim.trans_error)
    t = cam.t.copy()
    if k > 0.0:
        t = t + rng.gamma(k, theta) * np.linalg.norm(cam.t) * _unit(rng)
    return Estimate(asm, R, t, P)


def rotation_error_deg(est: Estimate, cam: CameraView) -> float:
    """Geodesic error of an estimate, measured against the ambiguity it declares."""
    return geodesic_angle(cam.R @ est.permutation, est.rotation)


def translation_error(est: Estimate, cam: CameraView) -> float:
    return float(np.linalg.norm(est.translation - cam.t) / np.linalg.norm(cam.t))


# -- dataset I/O -------------------------------------------------------------

def _write_manifest(root: Path) -> dict:
    files = sorted(p for p in root.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {"files": {p.relative_to(root).as_posix(): dataio.sha256_file(p) for p in files}}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def export_dataset(scene: SyntheticScene, directory) -> dict:
    """Write the scene to ``directory`` and return the manifest (relative path -> sha256)."""
    root = Path(directory)
    try:
        (root / "frames").mkdir(parents=True, exist_ok=True)
        (root / "truth").mkdir(parents=True, exist_ok=True)
        for i, img in enumerate(scene.frames):
            dataio.save_f32(img, root / "frames" / f"{i:04d}.f32")
            dataio.save_png(img, root / "frames" / f"{i:04d}.png")
        poses = [{"frame": i, "R": v.R.tolist(), "t": v.t.tolist()} for i, v in enumerate(scene.views)]
        (root / "poses.json").write_text(json.dumps(poses, indent=1))
        (root / "camera.json").write_text(json.dumps(scene.views[0].intrinsics_dict(), indent=2))
        save_cloud(scene.truth_cloud, root / "truth" / "cloud.ply")
        scene.truth_assembly.save(root / "truth" / "assembly.json")
        save_gaussians(scene.truth_model, root / "truth" / "model.ply")
        meta = {"seed": scene.seed, "extent": scene.extent, "colors": scene.colors, "n_views": len(scene.views)}
        (root / "scene.json").write_text(json.dumps(meta, indent=2))
        return _write_manifest(root)
    except OSError as exc:
        raise IoFailure(f"cannot write dataset to {root}: {exc}") from exc


def load_dataset(directory) -> SyntheticScene:
    root = Path(directory)
    try:
        intr = json.loads((root / "camera.json").read_text())
        poses = json.loads((root / "poses.json").read_text())
        meta = json.loads((root / "scene.json").read_text())
        views = [
            CameraView(intr["fx"], intr["fy"], intr["cx"], intr["cy"], intr["width"], intr["height"],
                       np.array(p["R"]), np.array(p["t"]))
            for p in sorted(poses, key=lambda p: p["frame"])
        ]
        frames = [dataio.load_f32(root / "frames" / f"{i:04d}.f32") for i in range(len(views))]
        asm = PrimitiveAssembly.load(root / "truth" / "assembly.json")
        cloud = load_cloud(root / "truth" / "cloud.ply")
        model = load_gaussians(root / "truth" / "model.ply")
    except (OSError, KeyError, ValueError) as exc:
        raise IoFailure(f"cannot read dataset at {root}: {exc}") from exc
    return SyntheticScene(asm, cloud, model, views, frames, meta.get("seed", 0), meta.get("extent", 1.0), meta.get("colors", []))


def verify_manifest(directory) -> bool:
    root = Path(directory)
    manifest = json.loads((root / "manifest.json").read_text())
    return all(dataio.sha256_file(root / rel) == h for rel, h in manifest["files"].items())
